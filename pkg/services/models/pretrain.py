## services/models/pretrain.py

"""
Point-classification pretraining of the instance encoder on the semantic
classes of real in-cell instances.
"""
import logging
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from config.experiment import EncoderConfig, PretrainConfig
from core import ops
from core.nn import ParameterSet
from core.optim import Adam
from core.tensor import Tape
from services.celldb.types import CellDatabase, CellInstance
from services.models.batching import instance_batch
from services.models.encoders import add_instance_encoder, encode_instances

log = logging.getLogger(__name__)


@dataclass
class PretrainResult:
    params: ParameterSet
    classes: List[str]
    losses: List[float] = field(default_factory=list)
    accuracy: List[float] = field(default_factory=list)


def _examples(databases: Iterable[CellDatabase], classes: Sequence[str]) -> Tuple[List[CellInstance], np.ndarray]:
    index = {name: i for i, name in enumerate(classes)}
    instances = [inst for db in databases for cell in db for inst in cell.real_instances()]
    return instances, np.array([index[inst.class_name] for inst in instances], dtype=np.int64)


def pretrain_points(
    databases: Sequence[CellDatabase],
    classes: Sequence[str],
    encoder_cfg: EncoderConfig,
    cfg: PretrainConfig,
    seed: int = 0,
) -> PretrainResult:
    params = ParameterSet(seed)
    add_instance_encoder(params, encoder_cfg)
    params.add_linear("pretrain.classify", encoder_cfg.embed_dim, len(classes))
    optimizer = Adam(params, lr=cfg.lr)
    result = PretrainResult(params, list(classes))

    instances, labels = _examples(databases, classes)
    if not instances:
        log.warning("[ PRETRAIN ] No real instances to pretrain on")
        return result

    rng = np.random.default_rng(seed)
    P = encoder_cfg.points_per_instance
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(instances))
        total, correct = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            picks = order[start:start + cfg.batch_size]
            batch = instance_batch([instances[i] for i in picks], P)
            with Tape() as tape:
                logits = ops.linear(
                    encode_instances(params, batch),
                    params["pretrain.classify.weight"],
                    params["pretrain.classify.bias"],
                )
                loss = ops.cross_entropy(logits, labels[picks])
            optimizer.step(tape.backward(loss))
            total += loss.item() * len(picks)
            correct += int((logits.data.argmax(axis=1) == labels[picks]).sum())
        result.losses.append(total / len(instances))
        result.accuracy.append(correct / len(instances))
        log.info(
            f"[ PRETRAIN ] epoch {epoch + 1}/{cfg.epochs} "
            f"loss {result.losses[-1]:.4f} accuracy {result.accuracy[-1]:.3f}"
        )
    return result
