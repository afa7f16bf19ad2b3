## core/optim.py

import logging
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from core.errors import GradientError, ShapeError
from core.nn import ParameterSet
from core.tensor import Tensor

log = logging.getLogger(__name__)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first: List[np.ndarray] = field(default_factory=list)
    second: List[np.ndarray] = field(default_factory=list)


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
) -> Sequence[Tensor]:
    """One bias-corrected Adam update, applied in place"""
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    if len(params) != len(grads):
        raise ShapeError("adam_step", (len(params),), (len(grads),))

    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise ShapeError(f"adam_step '{p.name}'", p.shape, g.shape)
        if not np.all(np.isfinite(g)):
            raise GradientError(p.name or "<unnamed>")

    if not state.first:
        state.first = [np.zeros_like(p.data) for p in params]
        state.second = [np.zeros_like(p.data) for p in params]

    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.first, state.second):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


class Adam:
    """Adam bound to a parameter set"""

    def __init__(self, params: ParameterSet, lr: float = 1e-3):
        self.params = params
        self.lr = lr
        self.state = AdamState()

    def step(self, grads) -> None:
        tensors = self.params.tensors()
        adam_step(tensors, grads.for_params(tensors), self.state, self.lr)
