## core/tensor.py

"""
Dense float64 tensors and the reverse-mode tape they are recorded on.

Primitives live in core.ops; they only record while a Tape is active, so
code running outside `with Tape():` is plain numpy and safe to share between
threads.
"""
from __future__ import annotations

import logging
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import ShapeError, TextLocError

log = logging.getLogger(__name__)

_active_tape: ContextVar[Optional["Tape"]] = ContextVar("active_tape", default=None)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "node")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64, copy=True) if not isinstance(data, np.ndarray) \
            else data.astype(np.float64, copy=False)
        self.requires_grad = requires_grad
        self.name = name
        self.node: Optional[int] = None

    def __repr__(self) -> str:
        label = f" '{self.name}'" if self.name else ""
        return f"<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>"

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", self.shape)
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    # operator sugar, all routed through core.ops
    def __add__(self, other):
        from core import ops
        return ops.add(self, as_tensor(other))

    def __radd__(self, other):
        from core import ops
        return ops.add(as_tensor(other), self)

    def __sub__(self, other):
        from core import ops
        return ops.sub(self, as_tensor(other))

    def __rsub__(self, other):
        from core import ops
        return ops.sub(as_tensor(other), self)

    def __mul__(self, other):
        from core import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        from core import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from core import ops
        return ops.matmul(self, as_tensor(other))


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass
class Record:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Gradients:
    """Gradient lookup keyed by tensor identity; unreachable tensors read as zero"""

    def __init__(self, grads: Dict[int, np.ndarray]):
        self._grads = grads

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        grad = self._grads.get(id(tensor))
        if grad is None:
            return np.zeros_like(tensor.data)
        return grad

    def __contains__(self, tensor: Tensor) -> bool:
        return id(tensor) in self._grads

    def for_params(self, params: Iterable[Tensor]) -> List[np.ndarray]:
        return [self[p] for p in params]


class Tape:
    """
    Ordered log of primitive applications.

    Records are appended as primitives run, so every record's inputs were
    produced earlier: reversed iteration is a valid topological order.
    """

    def __init__(self):
        self.records: List[Record] = []
        self._token = None

    def __enter__(self) -> "Tape":
        if _active_tape.get() is not None:
            raise TextLocError("nested tapes are not supported")
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.records)

    def record(self, op: str, inputs: Sequence[Tensor], output: Tensor, backward: BackwardFn) -> None:
        output.requires_grad = True
        output.node = len(self.records)
        self.records.append(Record(op, tuple(inputs), output, backward))

    def backward(self, loss: Tensor) -> Gradients:
        if loss.size != 1:
            raise ShapeError("backward (loss must be scalar)", loss.shape)

        grads: Dict[int, np.ndarray] = {}
        if not loss.requires_grad:
            return Gradients(grads)

        grads[id(loss)] = np.ones_like(loss.data)
        for rec in reversed(self.records):
            upstream = grads.get(id(rec.output))
            if upstream is None:
                continue
            # intermediate outputs are released once propagated
            if rec.output.node is not None:
                grads.pop(id(rec.output))
            partials = rec.backward(upstream)
            for tensor, partial in zip(rec.inputs, partials):
                if partial is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + partial
                else:
                    grads[key] = partial
        return Gradients(grads)


def active_tape() -> Optional[Tape]:
    return _active_tape.get()


def backward(tape: Tape, loss: Tensor) -> Gradients:
    return tape.backward(loss)
