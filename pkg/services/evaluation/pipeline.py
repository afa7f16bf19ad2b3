## services/evaluation/pipeline.py

"""
Localization evaluation over grounded queries.

Every mode retrieves (or draws) ranked candidate cells for each query,
estimates a position inside each candidate and scores the recall grid over
(k, epsilon). Random modes repeat the draw over seeded trials and report the
mean.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.experiment import ExperimentConfig
from core.errors import OracleConfigError, StreetLookupError
from core.nn import ParameterSet
from services.celldb.grounding import GroundedQuery, gt_matches
from services.celldb.types import Cell, CellDatabase
from services.evaluation.modes import EvalMode
from services.evaluation.recall import LocalizationResult, recall_grid
from services.evaluation.street_filter import street_filter
from services.fine.matching import RefinedEstimate, estimate_position
from services.fine.model import FineInference, FineModel
from services.models.batching import description_batch
from services.models.encoders import encode_descriptions
from services.models.vocab import Vocabulary
from services.retrieval.index import RetrievalIndex, retrieve_topk
from services.scene.streets import StreetMap

log = logging.getLogger(__name__)

TEXT_BATCH = 256


@dataclass
class CoarseModel:
    params: ParameterSet
    vocab: Vocabulary
    indexes: Dict[str, RetrievalIndex]
    points_per_instance: int


@dataclass
class ModeReport:
    mode: str
    recall: Dict[Tuple[int, float], float]
    precision: Optional[float] = None
    matching_recall: Optional[float] = None
    trials: int = 1
    queries: int = 0
    results: List[LocalizationResult] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "queries": self.queries,
            "trials": self.trials,
            "matching_precision": self.precision,
            "matching_recall": self.matching_recall,
            "recall": [{"k": k, "epsilon": eps, "recall": value} for (k, eps), value in sorted(self.recall.items())],
        }


@dataclass
class MetricsTable:
    name: str
    ks: List[int]
    epsilons: List[float]
    reports: List[ModeReport] = field(default_factory=list)

    def rows(self) -> List[dict]:
        rows = []
        for report in self.reports:
            for k in self.ks:
                for eps in self.epsilons:
                    rows.append({"mode": report.mode, "k": k, "epsilon": eps, "recall": report.recall[(k, eps)]})
        return rows

    def report(self, mode: str) -> ModeReport:
        for report in self.reports:
            if report.mode == mode:
                return report
        raise KeyError(mode)

    def summary(self) -> dict:
        return {
            "name": self.name,
            "k": list(self.ks),
            "epsilon": list(self.epsilons),
            "modes": [r.to_dict() for r in self.reports],
        }


@dataclass
class _QueryOutcome:
    result: LocalizationResult
    debug: List[dict]
    predicted: int = 0
    correct: int = 0
    expected: int = 0


def random_assignment(num_hints: int, cell: Cell, rng: np.random.Generator) -> List[Tuple[int, int]]:
    """Uniformly random injective pairing of hints with real instances"""
    real = np.flatnonzero(~cell.pad_mask)
    count = min(num_hints, len(real))
    hints = rng.permutation(num_hints)[:count]
    instances = rng.permutation(real)[:count]
    return sorted((int(j), int(i)) for j, i in zip(hints, instances))


class Evaluator:
    def __init__(
        self,
        config: ExperimentConfig,
        databases: Dict[str, CellDatabase],
        coarse: Optional[CoarseModel] = None,
        fine: Optional[FineModel] = None,
        streets: Optional[Dict[str, StreetMap]] = None,
        workers: int = 1,
        debug_dir: Optional[Union[str, Path]] = None,
    ):
        self.config = config
        self.databases = databases
        self.coarse = coarse
        self.fine = fine
        self.streets = streets or {}
        self.workers = max(1, workers)
        self.debug_dir = Path(debug_dir) if debug_dir is not None else None
        self._texts: Dict[str, np.ndarray] = {}
        self._inferences: Dict[Tuple[str, int], FineInference] = {}

    # candidates

    def _check(self, mode: EvalMode) -> None:
        if mode.needs_coarse_model and self.coarse is None:
            raise OracleConfigError(f"mode '{mode.name}' needs a trained coarse model")
        if mode.needs_fine_model and self.fine is None:
            raise OracleConfigError(f"mode '{mode.name}' needs a trained fine model")

    def _embed_texts(self, queries: Sequence[GroundedQuery]) -> None:
        pending = [q.description for q in queries if q.description.id not in self._texts]
        for start in range(0, len(pending), TEXT_BATCH):
            chunk = pending[start:start + TEXT_BATCH]
            embedded = encode_descriptions(self.coarse.params, description_batch(chunk, self.coarse.vocab)).data
            for description, row in zip(chunk, embedded):
                self._texts[description.id] = row

    def _street_map(self, scene_id: str) -> StreetMap:
        if scene_id not in self.streets:
            raise StreetLookupError(f"no street map for scene {scene_id}")
        return self.streets[scene_id]

    def candidates(self, mode: EvalMode, query: GroundedQuery, rng: np.random.Generator) -> np.ndarray:
        """Ranked candidate cell ids, truncated to the largest k"""
        description = query.description
        db = self.databases[description.scene_id]
        k_max = max(self.config.eval.k)
        filtered = self.config.eval.street_filter
        if mode.coarse == "oracle":
            return np.array([query.cell_id], dtype=np.int64)
        if mode.coarse == "random":
            ranked = rng.permutation(db.ids())
        else:
            index = self.coarse.indexes[description.scene_id]
            ranked = retrieve_topk(self._texts[description.id], index, len(index) if filtered else k_max).cell_ids
        if filtered:
            ranked = street_filter(ranked, description.position, self._street_map(description.scene_id), db)
        return ranked[:k_max]

    # fine stage

    def _infer(self, cell: Cell, query: GroundedQuery) -> FineInference:
        key = (query.description.id, cell.id)
        if key not in self._inferences:
            self._inferences[key] = self.fine.infer(cell, query.description)
        return self._inferences[key]

    def oracle_translations(self, query: GroundedQuery, cell: Cell) -> np.ndarray:
        """
        Per hint, the offset from its ground-truth instance on the ground-truth
        cell to the position, rescaled to `cell`; zero for unmatched hints.
        """
        truth = self.databases[query.description.scene_id].cell(query.cell_id)
        return query.matches.translation * (truth.size / cell.size)

    def refine(self, mode: EvalMode, query: GroundedQuery, cell: Cell, rng: np.random.Generator) -> RefinedEstimate:
        description = query.description
        num_hints = len(description.hints)
        inference = self._infer(cell, query) if mode.needs_fine_model else None

        confidences = None
        if mode.matching == "learned":
            pairs = [(m.hint, m.instance) for m in inference.matches]
            confidences = [m.confidence for m in inference.matches]
        elif mode.matching == "oracle":
            truth = query.matches if cell.id == query.cell_id else gt_matches(
                description, cell, self.config.cells.direction_threshold
            )
            pairs = truth.pairs()
        else:
            pairs = random_assignment(num_hints, cell, rng)

        if mode.translation == "learned":
            translations = inference.translations
        elif mode.translation == "oracle":
            translations = self.oracle_translations(query, cell)
        else:
            translations = np.zeros((num_hints, 2))
        return estimate_position(pairs, translations, cell, confidences)

    # per query

    def _localize(self, mode: EvalMode, position: int, query: GroundedQuery, trial: int) -> _QueryOutcome:
        rng = np.random.default_rng([self.config.seed, trial, position])
        description = query.description
        db = self.databases[description.scene_id]
        ranked = self.candidates(mode, query, rng)

        estimates, fallbacks, debug = [], [], []
        for cell_id in ranked:
            cell = db.cell(int(cell_id))
            if not mode.fine:
                estimates.append(cell.center)
                fallbacks.append(False)
                continue
            refined = self.refine(mode, query, cell, rng)
            estimates.append(refined.position)
            fallbacks.append(refined.fallback)
            if mode.needs_fine_model:
                entry = refined.to_dict()
                entry["plan"] = self._infer(cell, query).plan.tolist()
                debug.append(entry)

        outcome = _QueryOutcome(
            LocalizationResult(description.id, description.position, ranked, np.array(estimates).reshape(-1, 2), fallbacks),
            debug,
        )
        if mode.fine and mode.matching == "learned":
            predicted = {(m.hint, m.instance) for m in self._infer(db.cell(query.cell_id), query).matches}
            expected = set(query.matches.pairs())
            outcome.predicted, outcome.expected = len(predicted), len(expected)
            outcome.correct = len(predicted & expected)
        return outcome

    def _dump(self, mode: EvalMode, outcomes: Sequence[_QueryOutcome]) -> None:
        folder = self.debug_dir / mode.name
        folder.mkdir(parents=True, exist_ok=True)
        for outcome in outcomes:
            name = outcome.result.query_id.replace("/", "__")
            payload = {
                "query": outcome.result.query_id,
                "position": outcome.result.position.tolist(),
                "candidates": outcome.debug,
            }
            (folder / f"{name}.json").write_text(json.dumps(payload, sort_keys=True, indent=1))
        log.info(f"[ EVAL ] Debug dump of {len(outcomes)} queries in {folder}")

    # modes

    def evaluate_mode(
        self,
        mode: EvalMode,
        queries: Sequence[GroundedQuery],
        epsilons: Optional[Sequence[float]] = None,
    ) -> ModeReport:
        if not queries:
            raise ValueError("no queries to evaluate")
        self._check(mode)
        if mode.needs_coarse_model:
            self._embed_texts(queries)
        epsilons = list(epsilons if epsilons is not None else self.config.eval.epsilon)
        trials = self.config.eval.random_trials if mode.is_random else 1

        grids, first = [], []
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            for trial in range(trials):
                outcomes = list(executor.map(
                    lambda item: self._localize(mode, item[0], item[1], trial), enumerate(queries)
                ))
                results = [o.result for o in outcomes]
                grids.append(recall_grid(results, self.config.eval.k, epsilons, self.config.eval.topk_rule))
                if trial == 0:
                    first = outcomes

        grid = {key: float(np.mean([g[key] for g in grids])) for key in grids[0]}
        report = ModeReport(mode.name, grid, trials=trials, queries=len(queries), results=[o.result for o in first])
        if mode.fine and mode.matching == "learned":
            predicted = sum(o.predicted for o in first)
            expected = sum(o.expected for o in first)
            correct = sum(o.correct for o in first)
            report.precision = correct / predicted if predicted else 0.0
            report.matching_recall = correct / expected if expected else 0.0
        if self.config.eval.debug_dump and self.debug_dir is not None and mode.needs_fine_model:
            self._dump(mode, first)

        top = ", ".join(f"k={k}/{eps:g}m {value:.3f}" for (k, eps), value in sorted(grid.items()))
        log.info(f"[ EVAL ] {mode.name}: {top}")
        return report

    def evaluate(
        self,
        modes: Sequence[EvalMode],
        queries: Sequence[GroundedQuery],
        epsilons: Optional[Sequence[float]] = None,
        name: str = "evaluation",
    ) -> MetricsTable:
        epsilons = [float(e) for e in (epsilons if epsilons is not None else self.config.eval.epsilon)]
        table = MetricsTable(name, list(self.config.eval.k), epsilons)
        for mode in modes:
            table.reports.append(self.evaluate_mode(mode, queries, epsilons))
        return table


def evaluate_pipeline(
    queries: Sequence[GroundedQuery],
    databases: Dict[str, CellDatabase],
    modes: Sequence[EvalMode],
    config: ExperimentConfig,
    coarse: Optional[CoarseModel] = None,
    fine: Optional[FineModel] = None,
    streets: Optional[Dict[str, StreetMap]] = None,
    workers: int = 1,
    debug_dir: Optional[Union[str, Path]] = None,
    epsilons: Optional[Sequence[float]] = None,
    name: str = "evaluation",
) -> MetricsTable:
    evaluator = Evaluator(config, databases, coarse, fine, streets, workers, debug_dir)
    return evaluator.evaluate(modes, queries, epsilons, name)
