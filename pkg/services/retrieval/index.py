## services/retrieval/index.py

"""
Exhaustive per-scene retrieval index over L2-normalized cell embeddings.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from core.container import read_container, write_container
from core.errors import ShapeError
from core.nn import ParameterSet
from services.celldb.types import CellDatabase
from services.models.batching import cell_batch
from services.models.encoders import encode_cells

log = logging.getLogger(__name__)

INDEX_KIND = "index"


def normalize_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x / np.sqrt((x ** 2).sum(axis=-1, keepdims=True) + 1e-12)


@dataclass
class RetrievalIndex:
    scene_id: str
    cell_ids: np.ndarray
    embeddings: np.ndarray
    config: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.cell_ids = np.asarray(self.cell_ids, dtype=np.int64)
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        if len(self.cell_ids) != len(self.embeddings):
            raise ShapeError("RetrievalIndex", self.cell_ids.shape, self.embeddings.shape)
        if not np.isfinite(self.embeddings).all():
            raise ValueError(f"{self.scene_id}: non-finite cell embeddings")

    def __len__(self) -> int:
        return len(self.cell_ids)

    def save(self, path: Union[str, Path]) -> Path:
        meta = {"scene": self.scene_id, "config": self.config}
        return write_container(path, INDEX_KIND, meta, {"cell_ids": self.cell_ids, "embeddings": self.embeddings})

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RetrievalIndex":
        meta, arrays = read_container(path, INDEX_KIND)
        return cls(meta["scene"], arrays["cell_ids"], arrays["embeddings"], meta["config"])


@dataclass
class TopK:
    cell_ids: np.ndarray
    distances: np.ndarray
    truncated: bool = False


def embed_cells(params: ParameterSet, db: CellDatabase, points_per_instance: int, batch_size: int = 64) -> np.ndarray:
    """Frozen (tape-free) embeddings of every cell, in database order"""
    chunks = []
    for start in range(0, len(db.cells), batch_size):
        batch = cell_batch(db.cells[start:start + batch_size], points_per_instance)
        chunks.append(encode_cells(params, batch).data)
    return np.vstack(chunks) if chunks else np.zeros((0, 0))


def build_index(
    params: ParameterSet,
    db: CellDatabase,
    points_per_instance: int,
    config: Optional[Dict[str, Any]] = None,
    batch_size: int = 64,
) -> RetrievalIndex:
    embeddings = normalize_rows(embed_cells(params, db, points_per_instance, batch_size))
    log.info(f"[ INDEX ] {db.scene_id}: {len(db)} cells embedded")
    return RetrievalIndex(db.scene_id, db.ids(), embeddings, dict(config or {}))


def retrieve_topk(query: np.ndarray, index: RetrievalIndex, k: int) -> TopK:
    """k nearest cells by Euclidean distance; ties by lowest cell id; exhaustive"""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(index) == 0:
        return TopK(np.zeros(0, dtype=np.int64), np.zeros(0), truncated=True)
    query = normalize_rows(np.asarray(query, dtype=np.float64).reshape(-1))
    distances = np.linalg.norm(index.embeddings - query, axis=1)
    order = np.lexsort((index.cell_ids, distances))
    truncated = k > len(index)
    if truncated:
        log.debug(f"[ INDEX ] k={k} exceeds {len(index)} cells of {index.scene_id}; returning all")
    order = order[:k]
    return TopK(index.cell_ids[order], distances[order], truncated)


def retrieve_batch(queries: np.ndarray, index: RetrievalIndex, k: int) -> List[TopK]:
    return [retrieve_topk(q, index, k) for q in np.atleast_2d(queries)]
