## services/models/batching.py

"""
Fixed-shape numpy inputs for the encoders.
"""
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from core.errors import ShapeError
from services.celldb.types import Cell, CellInstance
from services.models.vocab import Vocabulary
from services.queries.types import Hint, QueryDescription


def canonical_subsample(points: np.ndarray, count: int) -> np.ndarray:
    """
    Reduce or pad points to `count` rows independently of their order:
    lexsort by (x, y, z, r, g, b), then take an even stride, or repeat
    cyclically when there are fewer than `count` points.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 6)
    n = len(points)
    if n == 0:
        raise ShapeError("canonical_subsample (empty instance)", points.shape)
    ordered = points[np.lexsort(points.T[::-1])]
    if n >= count:
        picks = (np.arange(count) * n) // count
    else:
        picks = np.arange(count) % n
    return ordered[picks]


@dataclass
class InstanceBatch:
    points: np.ndarray  # (B, P, 6)
    colors: np.ndarray  # (B, 3) mean rgb over all points
    centers: np.ndarray  # (B, 3) mean xyz over all points

    def __len__(self) -> int:
        return len(self.points)


def instance_batch(instances: Sequence[CellInstance], points_per_instance: int) -> InstanceBatch:
    if not instances:
        return InstanceBatch(np.zeros((0, points_per_instance, 6)), np.zeros((0, 3)), np.zeros((0, 3)))
    return InstanceBatch(
        points=np.stack([canonical_subsample(inst.points, points_per_instance) for inst in instances]),
        colors=np.stack([inst.points[:, 3:6].mean(axis=0) for inst in instances]),
        centers=np.stack([inst.points[:, :3].mean(axis=0) for inst in instances]),
    )


@dataclass
class CellBatch:
    instances: InstanceBatch  # flattened (B * N)
    pad_mask: np.ndarray  # (B, N), True for padding
    cell_ids: List[int]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pad_mask.shape


def cell_batch(cells: Sequence[Cell], points_per_instance: int) -> CellBatch:
    sizes = {len(cell.instances) for cell in cells}
    if len(sizes) > 1:
        raise ShapeError("cell_batch (cells padded to different sizes)", *[(n,) for n in sorted(sizes)])
    flat = [inst for cell in cells for inst in cell.instances]
    return CellBatch(
        instances=instance_batch(flat, points_per_instance),
        pad_mask=np.array([cell.pad_mask for cell in cells], dtype=bool).reshape(len(cells), -1),
        cell_ids=[cell.id for cell in cells],
    )


@dataclass
class HintBatch:
    token_ids: np.ndarray  # (L,) every token of every hint, concatenated
    averaging: np.ndarray  # (H, L) row h averages the tokens of hint h
    counts: List[int]  # hints per description

    @property
    def num_hints(self) -> int:
        return self.averaging.shape[0]


def hint_batch(hints_per_description: Sequence[Sequence[Hint]], vocab: Vocabulary) -> HintBatch:
    encoded = [vocab.encode(h.text) for hints in hints_per_description for h in hints]
    total = sum(len(ids) for ids in encoded)
    averaging = np.zeros((len(encoded), total))
    start = 0
    for row, ids in enumerate(encoded):
        averaging[row, start:start + len(ids)] = 1.0 / len(ids)
        start += len(ids)
    token_ids = np.concatenate(encoded) if encoded else np.zeros(0, dtype=np.int64)
    return HintBatch(token_ids, averaging, [len(hints) for hints in hints_per_description])


def description_batch(descriptions: Sequence[QueryDescription], vocab: Vocabulary) -> HintBatch:
    return hint_batch([d.hints for d in descriptions], vocab)
