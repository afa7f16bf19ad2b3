## services/celldb/types.py

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from core.errors import TextLocError
from services.scene.types import Provenance


@dataclass
class CellInstance:
    id: str
    class_name: str
    points: np.ndarray  # (n, 6), world frame until the cell is normalized
    provenance: Provenance = Provenance.LABELED

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 6)

    @property
    def center(self) -> np.ndarray:
        return self.points[:, :3].mean(axis=0)

    @property
    def is_padding(self) -> bool:
        return self.provenance is Provenance.PADDING

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class Cell:
    id: int
    scene_id: str
    origin: np.ndarray  # southwest corner
    size: float
    instances: List[CellInstance]
    pad_mask: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    street: str = ""
    normalized: bool = False

    def __post_init__(self) -> None:
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(2)
        if len(self.pad_mask) != len(self.instances):
            self.pad_mask = np.array([inst.is_padding for inst in self.instances], dtype=bool)

    @property
    def center(self) -> np.ndarray:
        return self.origin + self.size / 2

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        x0, y0 = self.origin
        return float(x0), float(y0), float(x0 + self.size), float(y0 + self.size)

    def real_instances(self) -> List[CellInstance]:
        return [inst for inst in self.instances if not inst.is_padding]

    @property
    def num_real(self) -> int:
        return int((~self.pad_mask).sum())

    def contains(self, xy, slack: float = 1e-9) -> bool:
        x0, y0, x1, y1 = self.bounds
        return bool(x0 - slack <= xy[0] <= x1 + slack and y0 - slack <= xy[1] <= y1 + slack)

    def to_world(self, normalized_xy: np.ndarray) -> np.ndarray:
        """Map normalized cell-frame 2D coordinates back to meters"""
        return self.origin + self.size * np.asarray(normalized_xy, dtype=np.float64)[..., :2]

    def world_centers(self) -> np.ndarray:
        """(N, 2) world-frame centers of every instance, padding included"""
        centers = np.array([inst.center[:2] for inst in self.instances]).reshape(-1, 2)
        return self.to_world(centers) if self.normalized else centers


@dataclass
class CellDatabase:
    scene_id: str
    size: float
    stride: float
    cells: List[Cell]
    config: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._by_id = {cell.id: cell for cell in self.cells}
        self._origins = np.array([cell.origin for cell in self.cells]).reshape(-1, 2)
        self._ids = np.array([cell.id for cell in self.cells], dtype=np.int64)
        self.grid = {(round(float(c.origin[0]), 6), round(float(c.origin[1]), 6)): c.id for c in self.cells}

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self) -> Iterator[Cell]:
        return iter(self.cells)

    def cell(self, cell_id: int) -> Cell:
        try:
            return self._by_id[cell_id]
        except KeyError:
            raise TextLocError(f"{self.scene_id}: no cell with id {cell_id}") from None

    def ids(self) -> np.ndarray:
        return self._ids

    def centers(self) -> np.ndarray:
        return self._origins + self.size / 2

    def containing(self, xy, slack: float = 1e-9) -> np.ndarray:
        """Ids of cells whose closed square contains xy"""
        xy = np.asarray(xy, dtype=np.float64)
        lo = self._origins - slack
        hi = self._origins + self.size + slack
        inside = ((xy >= lo) & (xy <= hi)).all(axis=1)
        return self._ids[inside]

    def cell_at(self, origin) -> Optional[Cell]:
        key = (round(float(origin[0]), 6), round(float(origin[1]), 6))
        return self._by_id.get(self.grid[key]) if key in self.grid else None


@dataclass
class GroundTruthMatch:
    """Hint-to-instance grounding inside one cell; -1 marks an unmatched hint"""
    cell_id: int
    assignment: np.ndarray  # (N_h,) instance index or -1
    translation: np.ndarray  # (N_h, 2) normalized position - instance center, zero when unmatched

    @property
    def matched(self) -> np.ndarray:
        return self.assignment >= 0

    def pairs(self) -> List[Tuple[int, int]]:
        return [(int(h), int(i)) for h, i in enumerate(self.assignment) if i >= 0]

    @property
    def num_matched(self) -> int:
        return int(self.matched.sum())
