## config/experiment.py

"""
Experiment configuration: nested dataclasses with full defaults, YAML I/O,
dotted-path overrides and validation.

The zero-flag run is the baseline setting: W=30, S=10, N_h=6, N_p=16,
alpha=0.35.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union, get_args, get_origin, get_type_hints

import yaml

from core.errors import ConfigError

log = logging.getLogger(__name__)

# Point-count thresholds were set for LiDAR density; synthetic scenes are
# about ten times sparser.
LIDAR_MIN_POINTS = 250
DENSITY_FACTOR = 0.1


def scaled(count: int, factor: float = DENSITY_FACTOR) -> int:
    return max(1, int(round(count * factor)))


INSTANCE_CLASSES = [
    "building", "pole", "traffic light", "traffic sign", "trash bin", "bus stop", "garage",
]
STUFF_CLASSES = ["vegetation", "fence", "wall", "sidewalk", "road", "terrain"]
STRATEGIES = ["closest", "direction", "class"]


@dataclass
class SceneConfig:
    extent: float = 200.0
    road_spacing: float = 60.0
    road_margin: float = 40.0
    road_width: float = 8.0
    sidewalk_width: float = 3.0
    object_spacing: float = 6.0
    ground_density: float = 0.6
    surface_density: float = 0.8
    min_instance_points: int = 20
    max_instance_points: int = 1500
    min_neighbors: int = 6
    neighbor_radius: float = 15.0
    color_noise: float = 0.03
    stuff_eps: float = 2.0
    min_cluster_points: int = scaled(LIDAR_MIN_POINTS)
    instance_classes: List[str] = field(default_factory=lambda: list(INSTANCE_CLASSES))
    stuff_classes: List[str] = field(default_factory=lambda: list(STUFF_CLASSES))
    streets: List[int] = field(default_factory=lambda: [3, 3])


@dataclass
class DataConfig:
    train_scenes: int = 2
    val_scenes: int = 1
    test_scenes: int = 1


@dataclass
class QueryConfig:
    spacing: float = 10.0
    positions_per_location: int = 4
    jitter: Optional[float] = None
    radius: float = 15.0
    num_hints: int = 6
    strategies: List[str] = field(default_factory=lambda: list(STRATEGIES))


@dataclass
class CellGridConfig:
    size: float = 30.0
    stride: float = 10.0
    third_rule: float = 1.0 / 3.0
    min_overlap_points: int = scaled(LIDAR_MIN_POINTS)
    max_instances: int = 16
    # follows query.num_hints unless set explicitly
    min_instances: int = 6
    pad_points: int = 10
    pad_extent: float = 1e-3
    direction_threshold: float = 45.0


@dataclass
class EncoderConfig:
    embed_dim: int = 128
    point_hidden: int = 64
    token_dim: int = 64
    points_per_instance: int = 32
    use_pretrained: bool = False


@dataclass
class CoarseConfig:
    batch_size: int = 64
    lr: float = 1e-3
    epochs: int = 64
    margin: float = 0.35
    shuffle_hints: bool = True
    flip_cells: bool = True
    rotate_instances: bool = True
    val_epsilon: float = 15.0


@dataclass
class FineConfig:
    batch_size: int = 32
    lr: float = 3e-4
    epochs: int = 16
    blocks: int = 2
    heads: int = 4
    sinkhorn_iters: int = 100
    sinkhorn_tol: float = 1e-6
    match_threshold: float = 0.2
    dustbin_init: float = 1.0


@dataclass
class PretrainConfig:
    batch_size: int = 32
    lr: float = 3e-3
    epochs: int = 8


@dataclass
class EvalConfig:
    k: List[int] = field(default_factory=lambda: [1, 5, 10])
    epsilon: List[float] = field(default_factory=lambda: [5.0, 10.0, 15.0])
    fine_epsilon: List[float] = field(default_factory=lambda: [2.0, 5.0, 10.0])
    modes: List[str] = field(default_factory=lambda: ["full", "coarse-only"])
    street_filter: bool = False
    # YAML street partition shared by every scene; empty uses each scene's own map
    street_partition: str = ""
    topk_rule: str = "min"
    random_trials: int = 100
    split: str = "test"
    debug_dump: bool = False
    plots: bool = True


@dataclass
class ExperimentConfig:
    seed: int = 0
    output_dir: Optional[str] = None
    scene: SceneConfig = field(default_factory=SceneConfig)
    data: DataConfig = field(default_factory=DataConfig)
    query: QueryConfig = field(default_factory=QueryConfig)
    cells: CellGridConfig = field(default_factory=CellGridConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    coarse: CoarseConfig = field(default_factory=CoarseConfig)
    fine: FineConfig = field(default_factory=FineConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def section(self, name: str) -> Dict[str, Any]:
        return dataclasses.asdict(getattr(self, name))


# building

def _coerce(value: Any, hint: Any, path: str, problems: List[str]) -> Any:
    origin = get_origin(hint)
    if origin is Union:
        options = [a for a in get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, options[0], path, problems)
    if origin in (list, List):
        if not isinstance(value, (list, tuple)):
            problems.append(f"{path}: expected a list, got {type(value).__name__}")
            return value
        (item,) = get_args(hint) or (Any,)
        return [_coerce(v, item, f"{path}[{i}]", problems) for i, v in enumerate(value)]
    if dataclasses.is_dataclass(hint):
        return _build(hint, value, path, problems)
    if hint is bool:
        if not isinstance(value, bool):
            problems.append(f"{path}: expected bool, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{path}: expected a number, got {value!r}")
            return value
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"{path}: expected an integer, got {value!r}")
        return value
    if hint is str:
        if not isinstance(value, str):
            problems.append(f"{path}: expected a string, got {value!r}")
        return value
    return value


def _build(cls, data: Any, path: str, problems: List[str]):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        problems.append(f"{path or '<root>'}: expected a mapping, got {type(data).__name__}")
        return cls()
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            problems.append(f"{path + '.' if path else ''}{key}: unknown key")
    kwargs = {}
    for name in names:
        if name in data:
            kwargs[name] = _coerce(data[name], hints[name], f"{path + '.' if path else ''}{name}", problems)
    return cls(**kwargs)


def validate(cfg: ExperimentConfig) -> List[str]:
    problems = []
    q, c, e = cfg.query, cfg.cells, cfg.eval
    if q.radius <= 0:
        problems.append("query.radius: must be > 0")
    if q.num_hints < 1:
        problems.append("query.num_hints: must be >= 1")
    if q.spacing <= 0:
        problems.append("query.spacing: must be > 0")
    unknown = [s for s in q.strategies if s not in STRATEGIES]
    if unknown or not q.strategies:
        problems.append(f"query.strategies: expected a non-empty subset of {STRATEGIES}")
    if not 0 < c.stride <= c.size:
        problems.append("cells.stride: must satisfy 0 < stride <= size")
    if c.max_instances < 1:
        problems.append("cells.max_instances: must be >= 1")
    if c.min_instances < 1:
        problems.append("cells.min_instances: must be >= 1")
    if not 0 < c.third_rule <= 1:
        problems.append("cells.third_rule: must be in (0, 1]")
    if cfg.scene.extent < 2 * c.size:
        problems.append("scene.extent: must be at least twice cells.size")
    if cfg.coarse.batch_size < 2:
        problems.append("coarse.batch_size: must be >= 2 (in-batch negatives)")
    if cfg.coarse.margin < 0:
        problems.append("coarse.margin: must be >= 0")
    if not 0 < cfg.fine.match_threshold < 1:
        problems.append("fine.match_threshold: must be in (0, 1)")
    if cfg.fine.sinkhorn_iters < 1:
        problems.append("fine.sinkhorn_iters: must be >= 1")
    if cfg.encoder.embed_dim % cfg.fine.heads:
        problems.append("fine.heads: must divide encoder.embed_dim")
    if any(k < 1 for k in e.k) or not e.k:
        problems.append("eval.k: values must be >= 1")
    if any(eps <= 0 for eps in e.epsilon + e.fine_epsilon):
        problems.append("eval.epsilon: values must be > 0")
    if e.topk_rule not in ("min", "per-rank"):
        problems.append("eval.topk_rule: expected 'min' or 'per-rank'")
    if e.split not in ("train", "val", "test"):
        problems.append("eval.split: expected train, val or test")
    return problems


def from_dict(data: Optional[Dict[str, Any]]) -> ExperimentConfig:
    problems: List[str] = []
    cfg = _build(ExperimentConfig, data or {}, "", problems)
    if not problems:
        if "min_instances" not in ((data or {}).get("cells") or {}):
            cfg.cells.min_instances = cfg.query.num_hints
        problems.extend(validate(cfg))
    if problems:
        raise ConfigError(problems)
    return cfg


def _parse_scalar(text: str) -> Any:
    return yaml.safe_load(text) if text != "" else ""


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Apply `section.key=value` overrides onto a plain config dict"""
    problems = []
    for item in overrides:
        if "=" not in item:
            problems.append(f"{item}: expected key=value")
            continue
        key, raw = item.split("=", 1)
        parts = key.strip().lstrip("-").split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                problems.append(f"{key}: '{part}' is not a section")
                break
        else:
            node[parts[-1]] = _parse_scalar(raw)
    if problems:
        raise ConfigError(problems)
    return data


def load(path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError([f"{path}: config file not found"])
        with open(path, "r") as f:
            data = yaml.safe_load(f) or {}
        log.info(f"[ CONFIG ] Loaded {path}")
    apply_overrides(data, overrides)
    return from_dict(data)


def dump(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True, default_flow_style=False)


def save(cfg: ExperimentConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump(cfg))
    return path
