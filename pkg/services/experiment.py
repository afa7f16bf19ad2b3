"""
Experiment orchestrator: one method per command, each reading its inputs
from the run directory and writing its artifacts plus a manifest.
"""
import csv
import json
import logging
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from config import experiment
from config.experiment import ExperimentConfig
from config.settings import config as settings
from core.errors import ConfigError
from core.nn import ParameterSet
from services.artifacts import ArtifactStore
from services.celldb import CellDatabase, GroundedQuery, ground_descriptions, load_cells, sample_cells, save_cells
from services.evaluation import CoarseModel, MetricsTable, evaluate_pipeline, expand_modes
from services.fine import FineModel, init_fine_params, train_fine
from services.fine.trainer import FineEpoch
from services.models import Vocabulary, build_vocabulary, init_coarse_params, pretrain_points
from services.queries import StuffClustering, generate_dataset, load_descriptions, save_descriptions
from services.queries.types import QueryDescription
from services.reporting import emit_report, render_cell, sweep_from_summary, tables_from_summary
from services.reporting.report import plot_recall_epsilon, plot_sweep
from services.retrieval import RetrievalIndex, build_index, train_coarse
from services.retrieval.trainer import CoarseTrainingResult
from services.scene import (
    Scene,
    StreetMap,
    coverage_report,
    generate_scene,
    import_labeled_cloud,
    load_scene,
    save_scene,
)

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
SPLIT_OFFSETS = {"train": 0, "val": 100, "test": 200}
SEED_STRIDE = 7919
QUERY_SEED_OFFSET = 50_000
SWEEPS = {
    "stride": "cells.stride",
    "hints": "query.num_hints",
    "positions": "query.positions_per_location",
}


def scene_seed(seed: int, split: str, index: int) -> int:
    return seed * SEED_STRIDE + SPLIT_OFFSETS[split] + index


def write_fine_metrics(history: Sequence[FineEpoch], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch", "loss", "precision", "recall"])
        for row in history:
            writer.writerow([
                row.epoch,
                f"{row.loss:.6f}",
                "" if row.precision is None else f"{row.precision:.6f}",
                "" if row.recall is None else f"{row.recall:.6f}",
            ])
    return path


class ExperimentRunner:
    """
    Runs the commands of an experiment against one run directory:
    - scenes, queries and cell databases per split
    - pretraining, coarse and fine training
    - evaluation, ablations, plots and cell previews
    """

    def __init__(self, config: ExperimentConfig, root: Optional[str] = None, workers: Optional[int] = None):
        self.config = config
        self.store = ArtifactStore(root or config.output_dir or settings.OUTPUT_ROOT)
        self.workers = workers or settings.WORKERS
        self.clustering = StuffClustering.from_config(config)

    # helpers

    def scene_ids(self, split: str) -> List[str]:
        count = getattr(self.config.data, f"{split}_scenes")
        return [f"{split}-{i:02d}" for i in range(count)]

    def seed_of(self, scene_id: str) -> int:
        split, index = scene_id.rsplit("-", 1)
        return scene_seed(self.config.seed, split, int(index))

    def classes(self) -> List[str]:
        return list(self.config.scene.instance_classes) + list(self.config.scene.stuff_classes)

    @contextmanager
    def _stage(self, name: str, timings: Dict[str, float]) -> Iterator[None]:
        start = time.perf_counter()
        yield
        timings[name] = time.perf_counter() - start

    def _manifest(self, artifact: str, command: str, inputs, outputs, timings) -> None:
        self.store.write_manifest(artifact, command, self.config.to_dict(), inputs, outputs, timings)

    def scene(self, scene_id: str) -> Scene:
        return load_scene(self.store.require(self.store.scene(scene_id), "gen-scene"))

    def street_maps(self, scene_ids: Iterable[str]) -> Dict[str, StreetMap]:
        partition = self.config.eval.street_partition
        if partition:
            shared = StreetMap.from_file(self.store.require(Path(partition), ""))
            log.info(f"[ EVAL ] Street partition from {partition}: {len(shared.regions)} streets")
            return {sid: shared for sid in scene_ids}
        maps = {}
        for sid in scene_ids:
            scene = self.scene(sid)
            if scene.streets is not None:
                maps[sid] = scene.streets
        return maps

    def databases(self, split: str, tag: str = "") -> Dict[str, CellDatabase]:
        return {
            sid: load_cells(self.store.require(self.store.cells(sid, tag), "build-cells"))
            for sid in self.scene_ids(split)
        }

    def descriptions(self, split: str, tag: str = "") -> List[QueryDescription]:
        out: List[QueryDescription] = []
        for sid in self.scene_ids(split):
            out.extend(load_descriptions(self.store.require(self.store.queries(sid, tag), "gen-queries")))
        return out

    def grounded(
        self,
        split: str,
        require_match: bool,
        query_tag: str = "",
        cell_tag: str = "",
    ) -> Tuple[List[GroundedQuery], Dict[str, CellDatabase]]:
        databases = self.databases(split, cell_tag)
        queries, _ = ground_descriptions(
            self.descriptions(split, query_tag),
            databases,
            self.config.cells.direction_threshold,
            require_match,
        )
        return queries, databases

    def vocabulary(self) -> Vocabulary:
        return Vocabulary.load(self.store.model("vocab.txt"))

    def pretrained(self) -> Optional[ParameterSet]:
        if not self.config.encoder.use_pretrained:
            return None
        _, state = ParameterSet.read(self.store.require(self.store.model("pretrain.tlck"), "pretrain-points"))
        params = ParameterSet(self.config.seed)
        for name, value in state.items():
            params.add(name, value)
        return params

    def coarse_params(self, vocab: Vocabulary) -> ParameterSet:
        params = init_coarse_params(self.config.encoder, len(vocab), self.config.seed)
        _, state = ParameterSet.read(self.store.require(self.store.model("coarse.tlck"), "train-coarse"))
        params.load_state(state)
        return params.frozen()

    def fine_model(self, vocab: Vocabulary) -> FineModel:
        params = init_fine_params(self.config.encoder, self.config.fine, len(vocab), self.config.seed)
        _, state = ParameterSet.read(self.store.require(self.store.model("fine.tlck"), "train-fine"))
        params.load_state(state)
        return FineModel(params.frozen(), vocab, self.config.encoder, self.config.fine)

    # commands

    def gen_scene(self, splits: Sequence[str] = SPLITS) -> List[Path]:
        cfg = self.config
        timings: Dict[str, float] = {}
        outputs = []
        for split in splits:
            for sid in self.scene_ids(split):
                with self._stage(sid, timings):
                    scene = generate_scene(cfg.scene, self.seed_of(sid), cfg.cells.size, sid)
                    outputs.append(save_scene(scene, self.store.scene(sid)))
                coverage = coverage_report(scene, cfg.scene.neighbor_radius)
                log.info(
                    f"[ SCENE ] {sid}: {len(scene.instances)} instances, "
                    f"min {coverage['min_neighbors']} / mean {coverage['mean_neighbors']:.1f} "
                    f"within {cfg.scene.neighbor_radius:g}m of the trajectory"
                )
        self._manifest("scenes", "gen-scene", [], outputs, timings)
        return outputs

    def import_scene(self, source: str, split: str, index: int = 0) -> Path:
        """Import a labeled point-cloud file as scene <split>-<index>"""
        sid = f"{split}-{index:02d}"
        path = self.store.require(Path(source), "")
        timings: Dict[str, float] = {}
        with self._stage(sid, timings):
            scene = import_labeled_cloud(path, sid, tuple(self.config.scene.streets), self.seed_of(sid))
            output = save_scene(scene, self.store.scene(sid))
        log.info(f"[ SCENE ] Imported {sid} from {path}: {len(scene.instances)} instances")
        self._manifest(f"import_{sid}", "import-scene", [path], [output], timings)
        return output

    def gen_queries(
        self,
        splits: Sequence[str] = SPLITS,
        query: Optional[experiment.QueryConfig] = None,
        tag: str = "",
    ) -> List[Path]:
        query = query or self.config.query
        timings: Dict[str, float] = {}
        inputs, outputs = [], []
        stats_path = self.store.stats(tag)
        stats = json.loads(stats_path.read_text()) if stats_path.exists() else {}
        for split in splits:
            for sid in self.scene_ids(split):
                with self._stage(sid, timings):
                    scene = self.scene(sid)
                    inputs.append(self.store.scene(sid))
                    descriptions, dataset = generate_dataset(
                        scene, query, self.seed_of(sid) + QUERY_SEED_OFFSET, self.clustering, self.workers
                    )
                    outputs.append(save_descriptions(descriptions, self.store.queries(sid, tag)))
                stats[sid] = dataset.to_dict()
                log.info(
                    f"[ QUERIES ] {sid}: {dataset.descriptions} descriptions at {dataset.positions} positions "
                    f"({dataset.unique_ratio:.2f} unique)"
                )
        stats_path.parent.mkdir(parents=True, exist_ok=True)
        stats_path.write_text(json.dumps(stats, sort_keys=True, indent=2) + "\n")
        outputs.append(stats_path)
        self._manifest("queries" + (f"-{tag}" if tag else ""), "gen-queries", inputs, outputs, timings)
        return outputs

    def build_cells(self, splits: Sequence[str] = SPLITS, tag: str = "") -> List[Path]:
        timings: Dict[str, float] = {}
        inputs, outputs = [], []
        for split in splits:
            for sid in self.scene_ids(split):
                with self._stage(sid, timings):
                    scene = self.scene(sid)
                    inputs.append(self.store.scene(sid))
                    db = sample_cells(scene, self.config.cells, self.clustering, self.seed_of(sid), self.workers)
                    outputs.append(save_cells(db, self.store.cells(sid, tag)))
                log.info(f"[ CELLS ] {sid}: {len(db)} cells (W={db.size:g}, S={db.stride:g})")
        self._manifest("cells" + (f"-{tag}" if tag else ""), "build-cells", inputs, outputs, timings)
        return outputs

    def pretrain_points(self) -> Path:
        timings: Dict[str, float] = {}
        databases = self.databases("train")
        with self._stage("pretrain", timings):
            result = pretrain_points(
                list(databases.values()), self.classes(), self.config.encoder, self.config.pretrain, self.config.seed
            )
        meta = {"classes": result.classes, "accuracy": result.accuracy[-1] if result.accuracy else None}
        path = result.params.save(self.store.model("pretrain.tlck"), meta)
        inputs = [self.store.cells(sid) for sid in databases]
        self._manifest("pretrain", "pretrain-points", inputs, [path], timings)
        return path

    def train_coarse(self, query_tag: str = "", persist: bool = True) -> CoarseTrainingResult:
        timings: Dict[str, float] = {}
        vocab = build_vocabulary(self.classes())
        train, databases = self.grounded("train", False, query_tag)
        val, val_databases = self.grounded("val", False) if self.scene_ids("val") else ([], {})
        metrics = self.store.model("coarse_metrics.csv") if persist else None
        with self._stage("train", timings):
            result = train_coarse(train, databases, self.config, vocab, val, val_databases, self.pretrained(), metrics)
        if persist:
            outputs = [
                vocab.save(self.store.model("vocab.txt")),
                result.params.save(self.store.model("coarse.tlck"), {"best_epoch": result.best_epoch}),
                metrics,
            ]
            inputs = [self.store.queries(sid, query_tag) for sid in self.scene_ids("train")]
            self._manifest("coarse", "train-coarse", inputs, outputs, timings)
        return result

    def build_index(self, split: Optional[str] = None) -> List[Path]:
        split = split or self.config.eval.split
        timings: Dict[str, float] = {}
        params = self.coarse_params(self.vocabulary())
        outputs = []
        for sid, db in self.databases(split).items():
            with self._stage(sid, timings):
                index = build_index(params, db, self.config.encoder.points_per_instance, {"split": split})
                outputs.append(index.save(self.store.index(sid)))
        self._manifest("index", "build-index", [self.store.model("coarse.tlck")], outputs, timings)
        return outputs

    def train_fine(self) -> Path:
        timings: Dict[str, float] = {}
        vocab_path = self.store.model("vocab.txt")
        vocab = self.vocabulary() if vocab_path.exists() else build_vocabulary(self.classes())
        train, databases = self.grounded("train", True)
        val, val_databases = self.grounded("val", True) if self.scene_ids("val") else ([], {})
        with self._stage("train", timings):
            result = train_fine(train, databases, self.config, vocab, val, val_databases, self.pretrained())
        outputs = [
            vocab.save(vocab_path),
            result.params.save(self.store.model("fine.tlck"), {"epochs": len(result.history)}),
            write_fine_metrics(result.history, self.store.model("fine_metrics.csv")),
        ]
        inputs = [self.store.queries(sid) for sid in self.scene_ids("train")]
        self._manifest("fine", "train-fine", inputs, outputs, timings)
        return outputs[1]

    def _indexes(self, params: ParameterSet, databases: Dict[str, CellDatabase], fresh: bool) -> Dict[str, RetrievalIndex]:
        indexes = {}
        for sid, db in databases.items():
            path = self.store.index(sid)
            if not fresh and path.exists():
                indexes[sid] = RetrievalIndex.load(path)
            else:
                indexes[sid] = build_index(params, db, self.config.encoder.points_per_instance)
        return indexes

    def evaluate(
        self,
        modes: Optional[Sequence[str]] = None,
        split: Optional[str] = None,
        epsilons: Optional[Sequence[float]] = None,
        stem: str = "metrics",
        query_tag: str = "",
        cell_tag: str = "",
        coarse: Optional[ParameterSet] = None,
        fresh_index: bool = False,
        persist: bool = True,
        name: str = "evaluation",
    ) -> MetricsTable:
        cfg = self.config
        split = split or cfg.eval.split
        names = list(modes or cfg.eval.modes)
        parsed = expand_modes(names)
        if epsilons is None and "fine-ablation" in names:
            epsilons = cfg.eval.fine_epsilon
        timings: Dict[str, float] = {}

        queries, databases = self.grounded(split, True, query_tag, cell_tag)
        if not queries:
            raise ConfigError([f"eval.split: no grounded queries in split '{split}'"])
        coarse_model = fine_model = None
        vocab = None
        if any(m.needs_coarse_model for m in parsed):
            vocab = self.vocabulary()
            params = coarse if coarse is not None else self.coarse_params(vocab)
            indexes = self._indexes(params, databases, fresh_index or coarse is not None or bool(cell_tag))
            coarse_model = CoarseModel(params, vocab, indexes, cfg.encoder.points_per_instance)
        if any(m.needs_fine_model for m in parsed):
            fine_model = self.fine_model(vocab or self.vocabulary())
        streets = self.street_maps(databases) if cfg.eval.street_filter else None

        with self._stage("evaluate", timings):
            table = evaluate_pipeline(
                queries,
                databases,
                parsed,
                cfg,
                coarse_model,
                fine_model,
                streets,
                self.workers,
                self.store.report("fine_debug"),
                epsilons,
                name,
            )
        if persist:
            plots = ["recall-epsilon"] if cfg.eval.plots else []
            outputs = emit_report([table], self.store.path("reports"), stem, plots)
            inputs = [self.store.queries(sid, query_tag) for sid in databases] + [
                self.store.cells(sid, cell_tag) for sid in databases
            ]
            inputs += [p for p in (self.store.model("coarse.tlck"), self.store.model("fine.tlck")) if p.exists()]
            if cfg.eval.street_filter and cfg.eval.street_partition:
                inputs.append(Path(cfg.eval.street_partition))
            self._manifest(stem, "evaluate", inputs, outputs, timings)
        return table

    def variant(self, key: str, value) -> "ExperimentRunner":
        data = experiment.apply_overrides(self.config.to_dict(), [f"{key}={value}"])
        return ExperimentRunner(experiment.from_dict(data), str(self.store.root), self.workers)

    def ablate(self, sweep: str, values: Sequence, modes: Optional[Sequence[str]] = None) -> List[MetricsTable]:
        """
        stride: rebuild the evaluation split's cells per value.
        hints: regenerate evaluation queries with the given hint count.
        positions: regenerate training queries and retrain the coarse model.
        """
        if sweep not in SWEEPS:
            raise ConfigError([f"ablate: unknown sweep '{sweep}', expected one of {sorted(SWEEPS)}"])
        if not values:
            raise ConfigError([f"ablate: no values for sweep '{sweep}'"])
        split = self.config.eval.split
        tables = []
        for value in values:
            runner = self.variant(SWEEPS[sweep], value)
            tag = f"{sweep}-{value:g}"
            if sweep == "stride":
                runner.build_cells([split], tag=tag)
                table = runner.evaluate(modes, cell_tag=tag, persist=False, name=tag)
            elif sweep == "hints":
                runner.gen_queries([split], tag=tag)
                table = runner.evaluate(modes, query_tag=tag, persist=False, name=tag)
            else:
                runner.gen_queries(["train"], tag=tag)
                trained = runner.train_coarse(query_tag=tag, persist=False)
                table = runner.evaluate(modes, coarse=trained.params.frozen(), persist=False, name=tag)
            tables.append(table)
        plots = ["recall-sweep", "recall-epsilon"] if self.config.eval.plots else []
        stem = f"ablate_{sweep}"
        outputs = emit_report(tables, self.store.path("reports"), stem, plots, {"label": SWEEPS[sweep], "values": list(values)})
        self._manifest(stem, "ablate", [], outputs, {})
        return tables

    def plot(self, summary: Optional[str] = None, kinds: Sequence[str] = ("recall-epsilon",)) -> List[Path]:
        path = Path(summary) if summary else self.store.report("metrics.json")
        self.store.require(path, "evaluate")
        tables = tables_from_summary(path)
        sweep = sweep_from_summary(path)
        outputs = []
        for kind in kinds:
            if kind == "recall-epsilon":
                for table in tables:
                    name = path.stem if len(tables) == 1 else f"{path.stem}_{table.name}"
                    outputs.append(plot_recall_epsilon(table, path.parent / f"{name}_recall_epsilon.svg"))
            elif kind == "recall-sweep" and sweep:
                outputs.append(plot_sweep(tables, sweep["values"], sweep["label"], path.parent / f"{path.stem}_recall_sweep.svg"))
            else:
                log.warning(f"[ REPORT ] Skipping plot '{kind}'")
        self._manifest(f"plot_{path.stem}", "plot", [path], outputs, {})
        return outputs

    def render_cell(self, scene_id: str, cell_id: int, resolution: int = 256) -> Path:
        path = self.store.require(self.store.cells(scene_id), "build-cells")
        cell = load_cells(path).cell(cell_id)
        out = render_cell(cell, self.store.path("renders", f"{scene_id}-cell-{cell_id:04d}.png"), resolution)
        self._manifest(f"render_{scene_id}-cell-{cell_id:04d}", "render-cell", [path], [out], {})
        return out

    def pipeline(self) -> MetricsTable:
        experiment.save(self.config, self.store.path("config.yaml"))
        self.gen_scene()
        self.gen_queries()
        self.build_cells()
        if self.config.encoder.use_pretrained:
            self.pretrain_points()
        self.train_coarse()
        self.build_index()
        self.train_fine()
        return self.evaluate()
