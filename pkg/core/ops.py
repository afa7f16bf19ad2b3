## core/ops.py

"""
Differentiable primitives.

Each primitive computes its output with numpy and, when a tape is active and
an input requires gradients, records a closure returning exact local
partials for each input.
"""
from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np

from core.errors import NonFiniteError, ShapeError
from core.tensor import Tensor, active_tape


def _emit(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op}: non-finite output")
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape.record(op, inputs, out, backward)
    return out


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`"""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# elementwise

def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("add", a, b)
    return _emit("add", a.data + b.data, (a, b),
                 lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("sub", a, b)
    return _emit("sub", a.data - b.data, (a, b),
                 lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("mul", a, b)
    return _emit("mul", a.data * b.data, (a, b),
                 lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)))


def scale(a: Tensor, factor: float) -> Tensor:
    return _emit("scale", a.data * factor, (a,), lambda g: (g * factor,))


def broadcast_to(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    try:
        data = np.broadcast_to(a.data, shape).copy()
    except ValueError:
        raise ShapeError("broadcast_to", a.shape, shape) from None
    return _emit("broadcast_to", data, (a,), lambda g: (unbroadcast(g, a.shape),))


def relu(a: Tensor) -> Tensor:
    active = a.data > 0
    return _emit("relu", np.where(active, a.data, 0.0), (a,), lambda g: (g * active,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _emit("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NonFiniteError("log: non-positive input")
    return _emit("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def square(a: Tensor) -> Tensor:
    return _emit("square", a.data ** 2, (a,), lambda g: (2.0 * g * a.data,))


# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return _emit("matmul", a.data @ b.data, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ weight + bias over the last axis of x"""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError("linear", x.shape, weight.shape)
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError("linear (bias)", bias.shape, (weight.shape[1],))

    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data

    def backward(g):
        flat_g = g.reshape(-1, g.shape[-1])
        flat_x = x.data.reshape(-1, x.shape[-1])
        gx = g @ weight.data.T
        gw = flat_x.T @ flat_g
        if bias is None:
            return gx, gw
        return gx, gw, flat_g.sum(axis=0)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _emit("linear", out, inputs, backward)


def pairwise_sqdist(a: Tensor, b: Tensor) -> Tensor:
    """Squared Euclidean distances between rows: (n, d), (m, d) -> (n, m)"""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError("pairwise_sqdist", a.shape, b.shape)
    diff = a.data[:, None, :] - b.data[None, :, :]
    out = np.einsum("nmd,nmd->nm", diff, diff)

    def backward(g):
        ga = 2.0 * (a.data * g.sum(axis=1, keepdims=True) - g @ b.data)
        gb = 2.0 * (b.data * g.sum(axis=0)[:, None] - g.T @ a.data)
        return ga, gb

    return _emit("pairwise_sqdist", out, (a, b), backward)


# shape

def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, shape) from None
    return _emit("reshape", data, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axis1: int, axis2: int) -> Tensor:
    return _emit("transpose", np.swapaxes(a.data, axis1, axis2), (a,),
                 lambda g: (np.swapaxes(g, axis1, axis2),))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ShapeError("concat", ())
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            i != ax and n != m for i, (n, m) in enumerate(zip(t.shape, ref))
        ):
            raise ShapeError("concat", ref, t.shape)
    sizes = [t.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=ax))

    return _emit("concat", np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), backward)


def gather_rows(table: Tensor, index: np.ndarray) -> Tensor:
    """table[index] along axis 0 (embedding lookup)"""
    index = np.asarray(index, dtype=np.int64)
    if table.ndim != 2 or (index.size and (index.min() < 0 or index.max() >= table.shape[0])):
        raise ShapeError("gather_rows", table.shape, index.shape)

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, index.reshape(-1), g.reshape(-1, table.shape[1]))
        return (grad,)

    return _emit("gather_rows", table.data[index], (table,), backward)


def take(a: Tensor, index: Tuple[np.ndarray, ...]) -> Tensor:
    """Advanced-index a into a 1-D tensor of selected entries"""
    index = tuple(np.asarray(i, dtype=np.int64) for i in index)
    if len(index) != a.ndim:
        raise ShapeError("take", a.shape, tuple(len(i) for i in index))

    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _emit("take", a.data[index], (a,), backward)


# reductions

def sum(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit("sum", np.asarray(out), (a,), backward)


def mean(a: Tensor, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    if count == 0:
        raise ShapeError("mean", a.shape)
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def max(a: Tensor, axis: int) -> Tensor:  # noqa: A001
    """Max over one axis; backward routes the gradient to the argmax only"""
    if a.shape[axis] == 0:
        raise ShapeError("max", a.shape)
    arg = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    out = np.take_along_axis(a.data, arg, axis=axis)

    def backward(g):
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, arg, np.expand_dims(g, axis), axis=axis)
        return (grad,)

    return _emit("max", np.squeeze(out, axis=axis), (a,), backward)


def logsumexp(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    peak = np.max(a.data, axis=axis, keepdims=True)
    shifted = np.exp(a.data - peak)
    total = shifted.sum(axis=axis, keepdims=True)
    out = np.log(total) + peak
    weights = shifted / total

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * weights,)

    return _emit("logsumexp", out if keepdims else np.squeeze(out, axis=axis), (a,), backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = np.exp(a.data - np.max(a.data, axis=axis, keepdims=True))
    out = shifted / shifted.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", out, (a,), backward)


def l2_normalize(a: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    norm = np.sqrt((a.data ** 2).sum(axis=axis, keepdims=True) + eps)
    out = a.data / norm

    def backward(g):
        return ((g - out * (g * out).sum(axis=axis, keepdims=True)) / norm,)

    return _emit("l2_normalize", out, (a,), backward)


# attention

def attention(q: Tensor, k: Tensor, v: Tensor, bias: Optional[np.ndarray] = None) -> Tensor:
    """
    Scaled dot-product attention softmax(q k^T / sqrt(d) + bias) v.

    q: (..., n, d), k: (..., m, d), v: (..., m, e); `bias` is a constant
    broadcastable to (..., n, m), used for key masking.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError("attention", q.shape, k.shape, v.shape)
    inv = 1.0 / np.sqrt(q.shape[-1])
    logits = (q.data @ np.swapaxes(k.data, -1, -2)) * inv
    if bias is not None:
        logits = logits + bias
    weights = np.exp(logits - logits.max(axis=-1, keepdims=True))
    weights /= weights.sum(axis=-1, keepdims=True)
    out = weights @ v.data

    def backward(g):
        gv = np.swapaxes(weights, -1, -2) @ g
        gw = g @ np.swapaxes(v.data, -1, -2)
        gs = weights * (gw - (gw * weights).sum(axis=-1, keepdims=True)) * inv
        gq = gs @ k.data
        gk = np.swapaxes(gs, -1, -2) @ q.data
        return unbroadcast(gq, q.shape), unbroadcast(gk, k.shape), unbroadcast(gv, v.shape)

    return _emit("attention", out, (q, k, v), backward)


# losses

def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy of (n, c) logits against integer labels"""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError("cross_entropy", logits.shape, labels.shape)
    picked = take(logits, (np.arange(len(labels)), labels))
    return mean(sub(logsumexp(logits, axis=1), picked))
