from services.fine.attention import attend
from services.fine.loss import fine_loss
from services.fine.matching import Match, RefinedEstimate, estimate_position, extract_matches
from services.fine.model import FineModel, init_fine_params, regress_translation
from services.fine.sinkhorn import log_sinkhorn, sinkhorn
from services.fine.trainer import FineTrainingResult, matching_scores, train_fine

__all__ = [
    "FineModel",
    "FineTrainingResult",
    "Match",
    "RefinedEstimate",
    "attend",
    "estimate_position",
    "extract_matches",
    "fine_loss",
    "init_fine_params",
    "log_sinkhorn",
    "matching_scores",
    "regress_translation",
    "sinkhorn",
    "train_fine",
]
