## services/evaluation/street_filter.py

from typing import Sequence

import numpy as np

from core.errors import StreetLookupError
from services.celldb.types import CellDatabase
from services.scene.streets import StreetMap


def cell_street(db: CellDatabase, cell_id: int, streets: StreetMap) -> str:
    """Street of the cell center under `streets`, which may differ from the stored tag"""
    return streets.street_of(db.cell(int(cell_id)).center)


def street_filter(ranked: Sequence[int], position, streets: StreetMap, db: CellDatabase) -> np.ndarray:
    """
    Keep only cells in the query's street, preserving rank order. Apply
    before truncating to k.
    """
    street = streets.street_of(position)
    ranked = np.asarray(ranked, dtype=np.int64)
    keep = np.array([cell_street(db, cid, streets) == street for cid in ranked], dtype=bool)
    return ranked[keep] if len(ranked) else ranked


__all__ = ["StreetLookupError", "cell_street", "street_filter"]
