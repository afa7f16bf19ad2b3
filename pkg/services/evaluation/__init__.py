from services.evaluation.modes import FINE_ABLATION_PRESET, ORACLE_PRESET, PRESETS, EvalMode, expand_modes, parse_mode
from services.evaluation.pipeline import CoarseModel, Evaluator, MetricsTable, ModeReport, evaluate_pipeline, random_assignment
from services.evaluation.recall import LocalizationResult, recall, recall_grid, success
from services.evaluation.street_filter import cell_street, street_filter

__all__ = [
    "FINE_ABLATION_PRESET",
    "ORACLE_PRESET",
    "PRESETS",
    "CoarseModel",
    "EvalMode",
    "Evaluator",
    "LocalizationResult",
    "MetricsTable",
    "ModeReport",
    "cell_street",
    "evaluate_pipeline",
    "expand_modes",
    "parse_mode",
    "random_assignment",
    "recall",
    "recall_grid",
    "street_filter",
    "success",
]
