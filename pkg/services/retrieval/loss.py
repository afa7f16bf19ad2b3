## services/retrieval/loss.py

import logging

import numpy as np

from core import ops
from core.tensor import Tensor

log = logging.getLogger(__name__)


def ranking_loss_from_similarity(similarity: Tensor, margin: float) -> Tensor:
    """
    Pairwise ranking loss over a (B, B) similarity matrix whose diagonal holds
    the matched pairs: for every i != j,
    [margin - S_ii + S_ij]+ (cell i against text j) and
    [margin - S_ii + S_ji]+ (text i against cell j), summed.
    """
    B = similarity.shape[0]
    if similarity.shape != (B, B):
        raise ValueError(f"similarity must be square, got {similarity.shape}")
    if B < 2:
        log.warning(f"[ COARSE ] ranking loss on a batch of {B}: no in-batch negatives, loss is 0")
        return Tensor(np.array(0.0))
    diag = ops.take(similarity, (np.arange(B), np.arange(B)))
    off_diagonal = Tensor(1.0 - np.eye(B))
    shifted = Tensor(np.array(margin))
    cell_side = ops.relu(ops.add(ops.sub(similarity, ops.reshape(diag, (B, 1))), shifted))
    text_side = ops.relu(ops.add(ops.sub(similarity, ops.reshape(diag, (1, B))), shifted))
    return ops.sum(ops.mul(ops.add(cell_side, text_side), off_diagonal))


def ranking_loss(cells: Tensor, texts: Tensor, margin: float) -> Tensor:
    """Ranking loss on L2-normalized (B, D) cell and text embeddings; row i of each is a pair"""
    if cells.shape != texts.shape:
        raise ValueError(f"cell and text batches differ: {cells.shape} vs {texts.shape}")
    c = ops.l2_normalize(cells)
    t = ops.l2_normalize(texts)
    return ranking_loss_from_similarity(ops.matmul(c, ops.transpose(t, 0, 1)), margin)
