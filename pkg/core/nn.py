## core/nn.py

"""
Named parameter sets and the small layer helpers the encoders share.
"""
from __future__ import annotations

import logging
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from core import ops
from core.container import read_container, write_container
from core.errors import ShapeError
from core.tensor import Tensor

log = logging.getLogger(__name__)

CHECKPOINT_KIND = "parameters"


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class ParameterSet:
    """Ordered named tensors with seeded initialisation"""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._params.items())

    def names(self) -> List[str]:
        return list(self._params)

    def tensors(self) -> List[Tensor]:
        return list(self._params.values())

    def add(self, name: str, value: np.ndarray) -> Tensor:
        tensor = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = tensor
        return tensor

    def add_linear(self, name: str, fan_in: int, fan_out: int, zero: bool = False) -> None:
        weight = np.zeros((fan_in, fan_out)) if zero else glorot_uniform(self._rng, fan_in, fan_out)
        self.add(f"{name}.weight", weight)
        self.add(f"{name}.bias", np.zeros(fan_out))

    def add_table(self, name: str, rows: int, cols: int) -> Tensor:
        """Glorot-initialised lookup table"""
        return self.add(name, glorot_uniform(self._rng, rows, cols))

    def add_mlp(self, name: str, dims: Sequence[int], zero_last: bool = False) -> None:
        """Stack of linear layers `name.0 ... name.{n-1}` for consecutive dims"""
        depth = len(dims) - 1
        for i in range(depth):
            self.add_linear(f"{name}.{i}", dims[i], dims[i + 1], zero=zero_last and i == depth - 1)

    def state(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, t.data.copy()) for name, t in self._params.items())

    def load_state(self, state: Mapping[str, np.ndarray], strict: bool = True) -> None:
        missing = [n for n in self._params if n not in state]
        unknown = [n for n in state if n not in self._params]
        if strict and (missing or unknown):
            raise ShapeError(f"load_state (missing={missing}, unknown={unknown})")
        for name, value in state.items():
            if name not in self._params:
                continue
            value = np.asarray(value, dtype=np.float64)
            if value.shape != self._params[name].shape:
                raise ShapeError(f"load_state '{name}'", value.shape, self._params[name].shape)
            self._params[name].data = value.copy()

    def copy(self) -> "ParameterSet":
        clone = ParameterSet(self.seed)
        for name, tensor in self._params.items():
            clone.add(name, tensor.data.copy())
        return clone

    def frozen(self) -> "ParameterSet":
        clone = self.copy()
        for tensor in clone.tensors():
            tensor.requires_grad = False
        return clone

    def save(self, path: Union[str, Path], meta: Optional[Dict[str, Any]] = None) -> Path:
        return write_container(path, CHECKPOINT_KIND, dict(meta or {}), self.state())

    @staticmethod
    def read(path: Union[str, Path]) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
        return read_container(path, CHECKPOINT_KIND)


def mlp(params: ParameterSet, name: str, x: Tensor, depth: int, final_relu: bool = False) -> Tensor:
    """Apply `name.0 ... name.{depth-1}` with ReLU between layers"""
    for i in range(depth):
        x = ops.linear(x, params[f"{name}.{i}.weight"], params[f"{name}.{i}.bias"])
        if i < depth - 1 or final_relu:
            x = ops.relu(x)
    return x
