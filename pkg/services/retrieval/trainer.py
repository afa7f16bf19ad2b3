## services/retrieval/trainer.py

"""
Coarse text-to-cell training with in-batch negatives.
"""
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.experiment import ExperimentConfig
from core.nn import ParameterSet
from core.optim import Adam
from core.tensor import Tape
from services.celldb.grounding import GroundedQuery
from services.celldb.types import Cell, CellDatabase
from services.models.augment import flip_pair, rotate_instances, shuffle_hints
from services.models.batching import cell_batch, description_batch
from services.models.encoders import encode_cells, encode_descriptions, init_coarse_params
from services.models.vocab import Vocabulary
from services.queries.types import QueryDescription
from services.retrieval.index import build_index, retrieve_topk
from services.retrieval.loss import ranking_loss

log = logging.getLogger(__name__)


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    val_recall: Optional[float]


@dataclass
class CoarseTrainingResult:
    params: ParameterSet
    best_epoch: int
    history: List[EpochMetrics] = field(default_factory=list)


def coarse_recall(
    params: ParameterSet,
    queries: Sequence[GroundedQuery],
    databases: Dict[str, CellDatabase],
    vocab: Vocabulary,
    points_per_instance: int,
    epsilon: float,
) -> float:
    """Fraction of queries whose top-1 cell center lies within epsilon of the position"""
    if not queries:
        return 0.0
    indexes = {sid: build_index(params, db, points_per_instance) for sid, db in databases.items()}
    texts = encode_descriptions(params, description_batch([q.description for q in queries], vocab)).data
    hits = 0
    for query, text in zip(queries, texts):
        db = databases[query.description.scene_id]
        top = retrieve_topk(text, indexes[db.scene_id], 1)
        if len(top.cell_ids) == 0:
            continue
        center = db.cell(int(top.cell_ids[0])).center
        hits += int(np.linalg.norm(center - query.description.position) < epsilon)
    return hits / len(queries)


class CoarseTrainer:
    def __init__(
        self,
        config: ExperimentConfig,
        vocab: Vocabulary,
        pretrained: Optional[ParameterSet] = None,
    ):
        self.config = config
        self.vocab = vocab
        self.params = init_coarse_params(config.encoder, len(vocab), config.seed, pretrained)
        self.optimizer = Adam(self.params, lr=config.coarse.lr)
        self.rng = np.random.default_rng(config.seed)

    def _augment(self, cell: Cell, description: QueryDescription) -> Tuple[Cell, QueryDescription]:
        cfg = self.config.coarse
        if cfg.shuffle_hints:
            description = shuffle_hints(description, self.rng)
        if cfg.flip_cells:
            for axis in (0, 1):
                if self.rng.uniform() < 0.5:
                    cell, description = flip_pair(cell, description, axis)
        if cfg.rotate_instances:
            cell = rotate_instances(cell, self.rng)
        return cell, description

    def train_batch(self, cells: Sequence[Cell], descriptions: Sequence[QueryDescription]) -> float:
        P = self.config.encoder.points_per_instance
        with Tape() as tape:
            cell_emb = encode_cells(self.params, cell_batch(cells, P))
            text_emb = encode_descriptions(self.params, description_batch(descriptions, self.vocab))
            loss = ranking_loss(cell_emb, text_emb, self.config.coarse.margin)
        self.optimizer.step(tape.backward(loss))
        return loss.item()

    def train(
        self,
        train: Sequence[GroundedQuery],
        databases: Dict[str, CellDatabase],
        val: Sequence[GroundedQuery] = (),
        val_databases: Optional[Dict[str, CellDatabase]] = None,
        metrics_path: Optional[Union[str, Path]] = None,
    ) -> CoarseTrainingResult:
        cfg = self.config.coarse
        P = self.config.encoder.points_per_instance
        best_state, best_recall, best_epoch = self.params.state(), -1.0, 0
        history: List[EpochMetrics] = []

        for epoch in range(1, cfg.epochs + 1):
            order = self.rng.permutation(len(train))
            losses = []
            for start in range(0, len(order), cfg.batch_size):
                picks = order[start:start + cfg.batch_size]
                if len(picks) < 2:
                    continue
                pairs = [
                    self._augment(databases[train[i].description.scene_id].cell(train[i].cell_id), train[i].description)
                    for i in picks
                ]
                losses.append(self.train_batch([c for c, _ in pairs], [d for _, d in pairs]))
            mean_loss = float(np.mean(losses)) if losses else 0.0

            val_recall = None
            if val and val_databases:
                val_recall = coarse_recall(self.params, val, val_databases, self.vocab, P, cfg.val_epsilon)
                if val_recall > best_recall:
                    best_state, best_recall, best_epoch = self.params.state(), val_recall, epoch
            else:
                best_state, best_epoch = self.params.state(), epoch
            history.append(EpochMetrics(epoch, mean_loss, val_recall))
            recall_text = f"{val_recall:.3f}" if val_recall is not None else "n/a"
            log.info(f"[ COARSE ] epoch {epoch}/{cfg.epochs} loss {mean_loss:.4f} val recall@1 {recall_text}")

        self.params.load_state(best_state)
        if metrics_path is not None:
            write_metrics(history, metrics_path)
        log.info(f"[ COARSE ] Kept epoch {best_epoch}")
        return CoarseTrainingResult(self.params, best_epoch, history)


def write_metrics(history: Sequence[EpochMetrics], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "loss", "val_recall"])
        for row in history:
            writer.writerow([row.epoch, f"{row.loss:.6f}", "" if row.val_recall is None else f"{row.val_recall:.6f}"])
    return path


def train_coarse(
    train: Sequence[GroundedQuery],
    databases: Dict[str, CellDatabase],
    config: ExperimentConfig,
    vocab: Vocabulary,
    val: Sequence[GroundedQuery] = (),
    val_databases: Optional[Dict[str, CellDatabase]] = None,
    pretrained: Optional[ParameterSet] = None,
    metrics_path: Optional[Union[str, Path]] = None,
) -> CoarseTrainingResult:
    trainer = CoarseTrainer(config, vocab, pretrained)
    return trainer.train(train, databases, val, val_databases, metrics_path)
