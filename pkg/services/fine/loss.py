## services/fine/loss.py

from typing import List, Sequence, Tuple

import numpy as np

from core import ops
from core.tensor import Tensor
from services.celldb.types import GroundTruthMatch


def matching_terms(
    matches: Sequence[GroundTruthMatch],
    pad_masks: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    (batch, row, column) indices into a (B, N_h + 1, N_p + 1) plan: GT pairs,
    dustbin column for unmatched hints, dustbin row for unmatched real instances.
    """
    b_idx: List[int] = []
    rows: List[int] = []
    cols: List[int] = []
    for b, gt in enumerate(matches):
        n_hints, n_inst = len(gt.assignment), len(pad_masks[b])
        matched_instances = set()
        for j, i in enumerate(gt.assignment):
            b_idx.append(b)
            rows.append(j)
            if i >= 0:
                cols.append(int(i))
                matched_instances.add(int(i))
            else:
                cols.append(n_inst)
        for i in range(n_inst):
            if i not in matched_instances and not pad_masks[b][i]:
                b_idx.append(b)
                rows.append(n_hints)
                cols.append(i)
    return np.array(b_idx, dtype=np.int64), np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64)


def fine_loss(
    log_plan: Tensor,
    matches: Sequence[GroundTruthMatch],
    translations: Tensor,
    pad_masks: np.ndarray,
) -> Tensor:
    """
    Matching term: mean of -log P over GT pairs and the dustbin entries of
    GT-unmatched hints and GT-unmatched real instances. Translation term:
    mean squared error over the coordinates of GT-matched hints (0 when none
    match). Returns their sum. Accepts a single (N_h + 1, N_p + 1) plan with
    (N_h, 2) translations, or batched versions of both.
    """
    if log_plan.ndim == 2:
        log_plan = ops.reshape(log_plan, (1,) + log_plan.shape)
        translations = ops.reshape(translations, (1,) + translations.shape)
        pad_masks = np.asarray(pad_masks, dtype=bool).reshape(1, -1)
        matches = [matches] if isinstance(matches, GroundTruthMatch) else matches

    index = matching_terms(matches, pad_masks)
    matching = ops.scale(ops.mean(ops.take(log_plan, index)), -1.0)

    b_idx, h_idx, targets = [], [], []
    for b, gt in enumerate(matches):
        for j in np.flatnonzero(gt.matched):
            b_idx.append(b)
            h_idx.append(int(j))
            targets.append(gt.translation[j])
    if not targets:
        return matching

    b_idx = np.repeat(np.array(b_idx), 2)
    h_idx = np.repeat(np.array(h_idx), 2)
    c_idx = np.tile([0, 1], len(targets))
    predicted = ops.take(translations, (b_idx, h_idx, c_idx))
    residual = ops.sub(predicted, Tensor(np.asarray(targets).reshape(-1)))
    return ops.add(matching, ops.mean(ops.square(residual)))
