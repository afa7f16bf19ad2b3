## services/models/encoders.py

"""
Instance, cell, hint and description encoders.

Every encoder is a pure function of a ParameterSet and numpy inputs, so the
same code serves training (under a Tape) and frozen inference.
"""
import logging
from typing import Optional

import numpy as np

from config.experiment import EncoderConfig
from core import ops
from core.nn import ParameterSet, mlp
from core.tensor import Tensor
from services.models.batching import CellBatch, HintBatch, InstanceBatch

log = logging.getLogger(__name__)

_SELF_EDGE = -1e9


def add_instance_encoder(params: ParameterSet, cfg: EncoderConfig) -> None:
    D, h = cfg.embed_dim, cfg.point_hidden
    params.add_mlp("instance.point", [6, h, h, D])
    params.add_mlp("instance.color", [3, D, D, D])
    params.add_mlp("instance.position", [3, D, D, D])
    params.add_mlp("instance.project", [3 * D, D, D, D])


def add_cell_encoder(params: ParameterSet, cfg: EncoderConfig) -> None:
    D = cfg.embed_dim
    params.add_mlp("cell.edge", [2 * D, D, D])
    params.add_linear("cell.out", D, D)


def add_text_encoder(params: ParameterSet, cfg: EncoderConfig, vocab_size: int) -> None:
    D, T = cfg.embed_dim, cfg.token_dim
    params.add_table("token.table", vocab_size, T)
    params.add_mlp("hint", [T, D, D])


def add_description_head(params: ParameterSet, cfg: EncoderConfig) -> None:
    params.add_linear("description.out", cfg.embed_dim, cfg.embed_dim)


def encode_instances(params: ParameterSet, batch: InstanceBatch) -> Tensor:
    """(B, P, 6) points plus mean colors and centers -> (B, D)"""
    semantic = ops.max(mlp(params, "instance.point", Tensor(batch.points), 3, final_relu=True), axis=1)
    color = mlp(params, "instance.color", Tensor(batch.colors), 3)
    position = mlp(params, "instance.position", Tensor(batch.centers), 3)
    return mlp(params, "instance.project", ops.concat([semantic, color, position], axis=-1), 3)


def encode_cell_instances(params: ParameterSet, features: Tensor) -> Tensor:
    """
    EdgeConv over the complete graph of (B, N, D) instance embeddings:
    edge features [F_i, F_j - F_i] for j != i, max over j, max over i, then
    a linear map. A single-instance cell uses its self edge.
    """
    B, N, D = features.shape
    fi = ops.broadcast_to(ops.reshape(features, (B, N, 1, D)), (B, N, N, D))
    fj = ops.broadcast_to(ops.reshape(features, (B, 1, N, D)), (B, N, N, D))
    edges = mlp(params, "cell.edge", ops.concat([fi, ops.sub(fj, fi)], axis=-1), 2, final_relu=True)
    if N > 1:
        mask = np.where(np.eye(N, dtype=bool), _SELF_EDGE, 0.0)[:, :, None]
        edges = ops.add(edges, Tensor(mask))
    nodes = ops.max(edges, axis=2)
    pooled = ops.max(nodes, axis=1)
    return ops.linear(pooled, params["cell.out.weight"], params["cell.out.bias"])


def encode_cells(params: ParameterSet, batch: CellBatch) -> Tensor:
    B, N = batch.shape
    features = encode_instances(params, batch.instances)
    return encode_cell_instances(params, ops.reshape(features, (B, N, features.shape[-1])))


def encode_hints(params: ParameterSet, batch: HintBatch) -> Tensor:
    """Mean token embedding per hint through a 2-layer perceptron -> (H, D)"""
    tokens = ops.gather_rows(params["token.table"], batch.token_ids)
    pooled = ops.matmul(Tensor(batch.averaging), tokens)
    return mlp(params, "hint", pooled, 2)


def pool_descriptions(params: ParameterSet, hints: Tensor, counts) -> Tensor:
    """Element-wise max over each description's hint embeddings, then a linear map"""
    D = hints.shape[-1]
    if len(set(counts)) == 1:
        pooled = ops.max(ops.reshape(hints, (len(counts), counts[0], D)), axis=1)
    else:
        rows, start = [], 0
        for count in counts:
            own = ops.gather_rows(hints, np.arange(start, start + count))
            rows.append(ops.reshape(ops.max(own, axis=0), (1, D)))
            start += count
        pooled = ops.concat(rows, axis=0)
    return ops.linear(pooled, params["description.out.weight"], params["description.out.bias"])


def encode_descriptions(params: ParameterSet, batch: HintBatch) -> Tensor:
    return pool_descriptions(params, encode_hints(params, batch), batch.counts)


def init_coarse_params(cfg: EncoderConfig, vocab_size: int, seed: int, pretrained: Optional[ParameterSet] = None) -> ParameterSet:
    params = ParameterSet(seed)
    add_instance_encoder(params, cfg)
    add_cell_encoder(params, cfg)
    add_text_encoder(params, cfg, vocab_size)
    add_description_head(params, cfg)
    if pretrained is not None:
        copy_instance_encoder(pretrained, params)
    return params


def copy_instance_encoder(source: ParameterSet, target: ParameterSet) -> int:
    """Copy every instance.* tensor present in both sets; returns the count"""
    state = {name: t.data for name, t in source if name.startswith("instance.") and name in target}
    target.load_state(state, strict=False)
    log.info(f"[ ENCODER ] Initialised {len(state)} instance-encoder tensors from pretraining")
    return len(state)
