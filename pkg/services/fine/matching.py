## services/fine/matching.py

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from services.celldb.types import Cell


@dataclass(frozen=True)
class Match:
    hint: int
    instance: int
    confidence: float


def extract_matches(plan: np.ndarray, threshold: float = 0.2, pad_mask: Optional[np.ndarray] = None) -> List[Match]:
    """
    Mutual-best pairs of a (N_h + 1, N_p + 1) plan with confidence at least
    threshold. Dustbins and padding columns never match.
    """
    core = np.asarray(plan, dtype=np.float64)[:-1, :-1]
    if core.size == 0:
        return []
    if pad_mask is not None:
        core = np.where(np.asarray(pad_mask, dtype=bool)[None, :], -np.inf, core)
    best_col = core.argmax(axis=1)
    best_row = core.argmax(axis=0)
    matches = []
    for j, i in enumerate(best_col):
        value = core[j, i]
        if best_row[i] == j and value >= threshold:
            matches.append(Match(int(j), int(i), float(value)))
    return matches


@dataclass
class RefinedEstimate:
    matches: List[Match]
    translations: np.ndarray  # (M, 2) meters, one per match
    estimates: np.ndarray  # (M, 2) world frame
    position: np.ndarray
    fallback: bool = False
    cell_id: int = -1

    def to_dict(self) -> dict:
        return {
            "cell": self.cell_id,
            "matches": [[m.hint, m.instance, m.confidence] for m in self.matches],
            "translations": self.translations.tolist(),
            "estimates": self.estimates.tolist(),
            "position": self.position.tolist(),
            "fallback": self.fallback,
        }


def estimate_position(
    matches: Sequence[Tuple[int, int]],
    translations: np.ndarray,
    cell: Cell,
    confidences: Optional[Sequence[float]] = None,
) -> RefinedEstimate:
    """
    Per match, the instance center plus the hint's translation scaled by the
    cell size; the estimate is their mean, or the cell center when there are
    no matches.
    """
    pairs = [(int(j), int(i)) for j, i in matches]
    confidences = list(confidences) if confidences is not None else [1.0] * len(pairs)
    records = [Match(j, i, float(c)) for (j, i), c in zip(pairs, confidences)]
    if not pairs:
        return RefinedEstimate(records, np.zeros((0, 2)), np.zeros((0, 2)), cell.center.copy(), True, cell.id)
    centers = cell.world_centers()
    translations = np.asarray(translations, dtype=np.float64).reshape(-1, 2)
    offsets = np.array([cell.size * translations[j] for j, _ in pairs])
    estimates = np.array([centers[i] for _, i in pairs]) + offsets
    return RefinedEstimate(records, offsets, estimates, estimates.mean(axis=0), False, cell.id)
