## services/evaluation/recall.py

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np


@dataclass
class LocalizationResult:
    query_id: str
    position: np.ndarray
    cell_ids: np.ndarray  # ranked candidates
    estimates: np.ndarray  # (K, 2), one per candidate
    fallbacks: List[bool] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=np.float64).reshape(2)
        self.cell_ids = np.asarray(self.cell_ids, dtype=np.int64).reshape(-1)
        self.estimates = np.asarray(self.estimates, dtype=np.float64).reshape(-1, 2)

    @property
    def errors(self) -> np.ndarray:
        return np.linalg.norm(self.estimates - self.position, axis=1)

    def best_error(self, k: int) -> float:
        errors = self.errors[:k]
        return float(errors.min()) if len(errors) else float("inf")

    def error_at_rank(self, k: int) -> float:
        """Error of the k-th candidate, or of the last one when fewer were returned"""
        errors = self.errors
        if not len(errors):
            return float("inf")
        return float(errors[min(k, len(errors)) - 1])


def success(result: LocalizationResult, k: int, epsilon: float, rule: str = "min") -> bool:
    error = result.best_error(k) if rule == "min" else result.error_at_rank(k)
    return error < epsilon


def recall(results: Sequence[LocalizationResult], k: int, epsilon: float, rule: str = "min") -> float:
    """Fraction of queries localized within epsilon (strict) by their top-k candidates"""
    if not results:
        raise ValueError("recall over an empty result set")
    return sum(success(r, k, epsilon, rule) for r in results) / len(results)


def recall_grid(
    results: Sequence[LocalizationResult],
    ks: Sequence[int],
    epsilons: Sequence[float],
    rule: str = "min",
) -> Dict[Tuple[int, float], float]:
    return {(k, float(eps)): recall(results, k, eps, rule) for k in ks for eps in epsilons}
