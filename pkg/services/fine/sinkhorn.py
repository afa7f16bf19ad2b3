## services/fine/sinkhorn.py

"""
Log-domain Sinkhorn with a dustbin row and column.

With N_h hints and N_p instances the transport plan has row marginals
(1, ..., 1, N_p) and column marginals (1, ..., 1, N_h); the learnable dustbin
score fills the extra row and column.
"""
import logging
from typing import Tuple

import numpy as np
from scipy.special import logsumexp

from core import ops
from core.errors import NonFiniteError
from core.tensor import Tensor, as_tensor

log = logging.getLogger(__name__)


def marginals(m: int, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Log row and column marginals, scaled to total mass 1"""
    norm = -np.log(m + n)
    log_mu = np.concatenate([np.full(m, norm), [np.log(n) + norm]])
    log_nu = np.concatenate([np.full(n, norm), [np.log(m) + norm]])
    return log_mu, log_nu


def _row_violation(couplings: np.ndarray, u: np.ndarray, v: np.ndarray, log_mu: np.ndarray, scale: float) -> float:
    z = couplings + u[:, :, None] + v[:, None, :]
    rows = np.exp(logsumexp(z, axis=2))
    return float(np.max(np.abs(rows - np.exp(log_mu)))) * scale


def log_sinkhorn(scores, dustbin, iters: int = 100, tol: float = 1e-6) -> Tensor:
    """
    Log transport plan of shape (..., N_h + 1, N_p + 1) for (N_h, N_p) or
    (B, N_h, N_p) scores. Iterates until the cap or until the largest row
    marginal violation falls below tol; tol <= 0 always runs every iteration.
    """
    scores = as_tensor(scores)
    dustbin = as_tensor(dustbin)
    if not np.all(np.isfinite(scores.data)) or not np.all(np.isfinite(dustbin.data)):
        raise NonFiniteError("sinkhorn: non-finite scores")
    if iters < 1:
        raise ValueError(f"sinkhorn needs at least one iteration, got {iters}")
    single = scores.ndim == 2
    if single:
        scores = ops.reshape(scores, (1,) + scores.shape)
    B, m, n = scores.shape

    corner = ops.reshape(dustbin, (1, 1, 1))
    couplings = ops.concat([
        ops.concat([scores, ops.broadcast_to(corner, (B, m, 1))], axis=2),
        ops.broadcast_to(corner, (B, 1, n + 1)),
    ], axis=1)

    log_mu, log_nu = marginals(m, n)
    mu, nu = Tensor(log_mu), Tensor(log_nu)
    u = Tensor(np.zeros((B, m + 1)))
    v = Tensor(np.zeros((B, n + 1)))
    used = iters
    for it in range(iters):
        u = ops.sub(mu, ops.logsumexp(ops.add(couplings, ops.reshape(v, (B, 1, n + 1))), axis=2))
        v = ops.sub(nu, ops.logsumexp(ops.add(couplings, ops.reshape(u, (B, m + 1, 1))), axis=1))
        if tol > 0 and _row_violation(couplings.data, u.data, v.data, log_mu, m + n) < tol:
            used = it + 1
            break
    log.debug(f"[ SINKHORN ] {used} iterations for {B}x{m}x{n}")

    plan = ops.add(ops.add(couplings, ops.reshape(u, (B, m + 1, 1))), ops.reshape(v, (B, 1, n + 1)))
    plan = ops.add(plan, Tensor(np.array(np.log(m + n))))
    return ops.reshape(plan, (m + 1, n + 1)) if single else plan


def sinkhorn(scores, dustbin, iters: int = 100, tol: float = 1e-6) -> np.ndarray:
    """Transport plan P (tape-free); rows sum to 1 except the dustbin row, which sums to N_p"""
    return np.exp(log_sinkhorn(scores, dustbin, iters, tol).data)
