from services.queries.generator import describe, generate_dataset
from services.queries.language import DIRECTIONS, ON_TOP, direction_word, flip_direction, render_hint, tokenize
from services.queries.sampling import StuffClustering, query_candidates, sample_positions, select_instances
from services.queries.storage import load_descriptions, save_descriptions
from services.queries.types import DatasetStats, Hint, QueryDescription, QueryPosition

__all__ = [
    "DIRECTIONS",
    "ON_TOP",
    "DatasetStats",
    "Hint",
    "QueryDescription",
    "QueryPosition",
    "StuffClustering",
    "describe",
    "direction_word",
    "flip_direction",
    "generate_dataset",
    "load_descriptions",
    "query_candidates",
    "render_hint",
    "sample_positions",
    "save_descriptions",
    "select_instances",
    "tokenize",
]
