## core/gradcheck.py

"""
Central finite-difference oracle for the tape.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from core.tensor import Tape, Tensor

log = logging.getLogger(__name__)


@dataclass
class GradCheckResult:
    passed: bool
    max_rel_error: float
    worst_index: Optional[tuple]
    analytic: float
    numeric: float
    checked: int

    def __str__(self) -> str:
        state = "pass" if self.passed else "FAIL"
        return (
            f"{state}: max rel. error {self.max_rel_error:.3e} at {self.worst_index} "
            f"(analytic {self.analytic:.6e}, numeric {self.numeric:.6e}, {self.checked} coords)"
        )


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    tol: float = 1e-4,
    step: float = 1e-5,
    floor: float = 1e-5,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> GradCheckResult:
    """
    Compare the tape gradient of scalar f at x against central differences.

    Relative error is |a - n| / max(|a|, |n|, floor). `max_coords` limits the
    check to a seeded random subset of coordinates.
    """
    was_tracked = x.requires_grad
    x.requires_grad = True
    try:
        with Tape() as tape:
            loss = f(x)
        analytic = tape.backward(loss)[x].copy()
    finally:
        x.requires_grad = was_tracked

    coords = list(np.ndindex(*x.shape))
    if max_coords is not None and len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        picks = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[i] for i in sorted(picks)]

    worst = GradCheckResult(True, 0.0, None, 0.0, 0.0, len(coords))
    for idx in coords:
        original = x.data[idx]
        x.data[idx] = original + step
        upper = f(x).item()
        x.data[idx] = original - step
        lower = f(x).item()
        x.data[idx] = original
        numeric = (upper - lower) / (2.0 * step)
        a = analytic[idx]
        if not (np.isfinite(numeric) and np.isfinite(a)):
            log.warning(f"[ GRADCHECK ] non-finite comparison at {idx}: analytic={a}, numeric={numeric}")
            return GradCheckResult(False, float("inf"), idx, float(a), float(numeric), len(coords))
        rel = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        if rel > worst.max_rel_error:
            worst = GradCheckResult(True, float(rel), idx, float(a), float(numeric), len(coords))

    worst.passed = worst.max_rel_error < tol
    return worst
