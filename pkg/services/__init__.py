"""
Domain services: scenes, queries, cell databases, models, retrieval,
fine localization, evaluation and reporting.
"""
