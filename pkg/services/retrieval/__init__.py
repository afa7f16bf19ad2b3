from services.retrieval.index import RetrievalIndex, TopK, build_index, embed_cells, retrieve_batch, retrieve_topk
from services.retrieval.loss import ranking_loss, ranking_loss_from_similarity
from services.retrieval.trainer import CoarseTrainer, CoarseTrainingResult, EpochMetrics, coarse_recall, train_coarse

__all__ = [
    "CoarseTrainer",
    "CoarseTrainingResult",
    "EpochMetrics",
    "RetrievalIndex",
    "TopK",
    "build_index",
    "coarse_recall",
    "embed_cells",
    "ranking_loss",
    "ranking_loss_from_similarity",
    "retrieve_batch",
    "retrieve_topk",
    "train_coarse",
]
