## services/fine/attention.py

"""
Residual multi-head attention blocks over hint and instance embeddings.

Each block runs self-attention on hints, self-attention on instances, then
cross-attention in both directions from the same intermediate states.
"""
from typing import Optional, Tuple

import numpy as np

from core import ops
from core.nn import ParameterSet
from core.tensor import Tensor

LAYERS = ("self_hint", "self_instance", "cross_hint", "cross_instance")
MASKED = -1e9


def add_attention_blocks(params: ParameterSet, dim: int, blocks: int) -> None:
    for b in range(blocks):
        for layer in LAYERS:
            for proj in ("query", "key", "value", "out"):
                params.add_linear(f"attend.{b}.{layer}.{proj}", dim, dim)


def _project(params: ParameterSet, name: str, x: Tensor) -> Tensor:
    return ops.linear(x, params[f"{name}.weight"], params[f"{name}.bias"])


def _split_heads(x: Tensor, heads: int) -> Tensor:
    B, n, D = x.shape
    return ops.transpose(ops.reshape(x, (B, n, heads, D // heads)), 1, 2)


def _merge_heads(x: Tensor) -> Tensor:
    B, H, n, d = x.shape
    return ops.reshape(ops.transpose(x, 1, 2), (B, n, H * d))


def key_bias(key_mask: Optional[np.ndarray]) -> Optional[np.ndarray]:
    """(B, m) True-for-masked keys -> additive (B, 1, 1, m) attention bias"""
    if key_mask is None:
        return None
    return np.where(key_mask, MASKED, 0.0)[:, None, None, :]


def message(
    params: ParameterSet,
    name: str,
    target: Tensor,
    source: Tensor,
    heads: int,
    bias: Optional[np.ndarray] = None,
) -> Tensor:
    """target + out(MHA(query(target), key(source), value(source)))"""
    q = _split_heads(_project(params, f"{name}.query", target), heads)
    k = _split_heads(_project(params, f"{name}.key", source), heads)
    v = _split_heads(_project(params, f"{name}.value", source), heads)
    attended = _merge_heads(ops.attention(q, k, v, bias))
    return ops.add(target, _project(params, f"{name}.out", attended))


def attend(
    params: ParameterSet,
    hints: Tensor,
    instances: Tensor,
    blocks: int,
    heads: int,
    pad_mask: Optional[np.ndarray] = None,
) -> Tuple[Tensor, Tensor]:
    """(B, N_h, D) hints and (B, N_p, D) instances; padding instances are masked as keys"""
    if hints.shape[-1] % heads:
        raise ValueError(f"{heads} heads do not divide embedding size {hints.shape[-1]}")
    bias = key_bias(pad_mask)
    for b in range(blocks):
        prefix = f"attend.{b}"
        hints = message(params, f"{prefix}.self_hint", hints, hints, heads)
        instances = message(params, f"{prefix}.self_instance", instances, instances, heads, bias)
        hints, instances = (
            message(params, f"{prefix}.cross_hint", hints, instances, heads, bias),
            message(params, f"{prefix}.cross_instance", instances, hints, heads),
        )
    return hints, instances
