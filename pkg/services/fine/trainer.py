## services/fine/trainer.py

"""
Joint training of matching and translation on ground-truth cells. No
description augmentation is applied at this stage.
"""
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.experiment import ExperimentConfig
from core.nn import ParameterSet
from core.optim import Adam
from core.tensor import Tape
from services.celldb.grounding import GroundedQuery
from services.celldb.types import CellDatabase
from services.fine.loss import fine_loss
from services.fine.model import FineModel, init_fine_params
from services.models.vocab import Vocabulary

log = logging.getLogger(__name__)


@dataclass
class FineEpoch:
    epoch: int
    loss: float
    precision: Optional[float]
    recall: Optional[float]


@dataclass
class FineTrainingResult:
    params: ParameterSet
    history: List[FineEpoch] = field(default_factory=list)


def matching_scores(
    model: FineModel,
    queries: Sequence[GroundedQuery],
    databases: Dict[str, CellDatabase],
) -> Tuple[float, float]:
    """
    Micro-averaged precision (predicted matches that are GT matches) and
    recall (GT matches that are predicted) on each query's GT cell.
    """
    predicted = correct = expected = 0
    for query in queries:
        cell = databases[query.description.scene_id].cell(query.cell_id)
        result = model.infer(cell, query.description)
        gt = set(query.matches.pairs())
        pairs = {(m.hint, m.instance) for m in result.matches}
        predicted += len(pairs)
        expected += len(gt)
        correct += len(pairs & gt)
    precision = correct / predicted if predicted else 0.0
    recall = correct / expected if expected else 0.0
    return precision, recall


def _batches(queries: Sequence[GroundedQuery], order: np.ndarray, size: int) -> List[List[int]]:
    """Batches of `size` in the given order, never mixing hint counts"""
    groups: Dict[int, List[int]] = defaultdict(list)
    for i in order:
        groups[len(queries[i].description.hints)].append(int(i))
    batches = []
    for count in sorted(groups):
        members = groups[count]
        batches.extend(members[s:s + size] for s in range(0, len(members), size))
    return batches


def train_fine(
    train: Sequence[GroundedQuery],
    databases: Dict[str, CellDatabase],
    config: ExperimentConfig,
    vocab: Vocabulary,
    val: Sequence[GroundedQuery] = (),
    val_databases: Optional[Dict[str, CellDatabase]] = None,
    pretrained: Optional[ParameterSet] = None,
) -> FineTrainingResult:
    cfg = config.fine
    params = init_fine_params(config.encoder, cfg, len(vocab), config.seed, pretrained)
    model = FineModel(params, vocab, config.encoder, cfg)
    optimizer = Adam(params, lr=cfg.lr)
    rng = np.random.default_rng(config.seed + 1)
    result = FineTrainingResult(params)

    for epoch in range(1, cfg.epochs + 1):
        losses = []
        for picks in _batches(train, rng.permutation(len(train)), cfg.batch_size):
            queries = [train[i] for i in picks]
            cells = [databases[q.description.scene_id].cell(q.cell_id) for q in queries]
            with Tape() as tape:
                out = model.forward(cells, [q.description for q in queries])
                loss = fine_loss(out.log_plan, [q.matches for q in queries], out.translations, out.pad_mask)
            optimizer.step(tape.backward(loss))
            losses.append(loss.item())
        mean_loss = float(np.mean(losses)) if losses else 0.0

        precision = recall = None
        if val and val_databases:
            precision, recall = matching_scores(model, val, val_databases)
        result.history.append(FineEpoch(epoch, mean_loss, precision, recall))
        scores = f"precision {precision:.3f} recall {recall:.3f}" if precision is not None else "no validation"
        log.info(f"[ FINE ] epoch {epoch}/{cfg.epochs} loss {mean_loss:.4f} {scores}")
    return result
