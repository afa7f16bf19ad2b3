## services/queries/sampling.py

"""
Query positions along the trajectory and the choice of hint targets.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from config.experiment import ExperimentConfig, QueryConfig
from core.errors import InsufficientInstancesError, SceneError
from services.queries.types import QueryPosition
from services.scene.clustering import cluster_stuff
from services.scene.types import Instance, Scene

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StuffClustering:
    """Parameters for clustering stuff points around a query position"""
    window: float = 30.0
    eps: float = 2.0
    min_cluster_points: int = 25

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "StuffClustering":
        return cls(window=cfg.cells.size, eps=cfg.scene.stuff_eps, min_cluster_points=cfg.scene.min_cluster_points)


def trajectory_anchors(trajectory: np.ndarray, spacing: float) -> np.ndarray:
    """Points every `spacing` meters of arc length, starting at the first vertex"""
    trajectory = np.asarray(trajectory, dtype=np.float64).reshape(-1, 2)
    if len(trajectory) == 0:
        raise SceneError("trajectory is empty")
    steps = np.linalg.norm(np.diff(trajectory, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(steps)])
    if arc[-1] <= 0:
        return trajectory[:1].copy()
    stations = np.arange(0.0, arc[-1] + 1e-9, spacing)
    return np.stack([np.interp(stations, arc, trajectory[:, 0]), np.interp(stations, arc, trajectory[:, 1])], axis=1)


def _jitter(rng: np.random.Generator, count: int, max_norm: float) -> np.ndarray:
    # uniform over the disk of radius max_norm
    radius = max_norm * np.sqrt(rng.uniform(size=count))
    angle = rng.uniform(0.0, 2 * np.pi, size=count)
    return np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)


def query_candidates(
    scene: Scene,
    xy: np.ndarray,
    radius: float,
    index: int,
    clustering: StuffClustering,
) -> List[Instance]:
    """
    Labeled instances and position-centred stuff clusters whose center lies
    within `radius` (2D) of xy, sorted by (distance, id).
    """
    found = []
    for inst in scene.instances:
        d = float(np.linalg.norm(inst.center[:2] - xy))
        if d <= radius:
            found.append((d, inst.id, inst))

    half = clustering.window / 2
    lo, hi = xy - half, xy + half
    for class_name, points in scene.stuff.items():
        if len(points) == 0:
            continue
        inside = (
            (points[:, 0] >= lo[0]) & (points[:, 0] <= hi[0])
            & (points[:, 1] >= lo[1]) & (points[:, 1] <= hi[1])
        )
        clusters = cluster_stuff(
            points[inside], class_name, clustering.eps, clustering.min_cluster_points, f"query-{index}",
        )
        for inst in clusters:
            d = float(np.linalg.norm(inst.center[:2] - xy))
            if d <= radius:
                found.append((d, inst.id, inst))

    found.sort(key=lambda item: (item[0], item[1]))
    return [inst for _, _, inst in found]


def sample_positions(
    scene: Scene,
    config: QueryConfig,
    seed: int,
    clustering: StuffClustering = StuffClustering(),
    workers: int = 1,
) -> List[QueryPosition]:
    """
    Jittered positions around equidistant trajectory anchors; positions
    outside the scene or with fewer than num_hints candidates are dropped.
    """
    rng = np.random.default_rng(seed)
    anchors = trajectory_anchors(scene.trajectory, config.spacing)
    max_norm = config.jitter if config.jitter is not None else clustering.window / 2
    offsets = _jitter(rng, len(anchors) * config.positions_per_location, max_norm)
    raw = np.repeat(anchors, config.positions_per_location, axis=0) + offsets

    inside = np.flatnonzero(scene.contains(raw, slack=0.0))

    def candidates(i: int) -> List[Instance]:
        return query_candidates(scene, raw[i], config.radius, int(i), clustering)

    with ThreadPoolExecutor(max_workers=workers) as executor:
        found = list(executor.map(candidates, inside))

    positions = [
        QueryPosition(id=f"{scene.id}/pos-{i:05d}", index=int(i), xy=raw[i], candidates=cands)
        for i, cands in zip(inside, found)
        if len(cands) >= config.num_hints
    ]
    log.info(
        f"[ QUERIES ] {scene.id}: {len(anchors)} anchors, {len(raw)} sampled, "
        f"{len(raw) - len(inside)} outside, {len(inside) - len(positions)} too sparse, {len(positions)} kept"
    )
    return positions


def _direction_angles(xy: np.ndarray, instances: Sequence[Instance]) -> np.ndarray:
    vectors = np.array([xy - inst.center[:2] for inst in instances])
    return np.arctan2(vectors[:, 1], vectors[:, 0])


def select_instances(xy: np.ndarray, candidates: Sequence[Instance], strategy: str, num_hints: int) -> List[Instance]:
    """
    Pick num_hints targets from candidates sorted by (distance, id).

    closest: the first num_hints. direction: start from the closest, then
    repeatedly add the candidate whose direction vector has the largest
    minimum angle to those already chosen. class: the closest instance of
    each not-yet-used class first, then the remaining closest.
    Ties always go to the earlier candidate.
    """
    if len(candidates) < num_hints:
        raise InsufficientInstancesError(f"need {num_hints} candidates, have {len(candidates)}")
    if strategy == "closest":
        return list(candidates[:num_hints])

    if strategy == "direction":
        angles = _direction_angles(np.asarray(xy, dtype=np.float64), candidates)
        chosen = [0]
        while len(chosen) < num_hints:
            best, best_score = -1, -1.0
            for i in range(len(candidates)):
                if i in chosen:
                    continue
                diff = np.abs(angles[i] - angles[chosen])
                score = float(np.min(np.minimum(diff, 2 * np.pi - diff)))
                if score > best_score + 1e-12:
                    best, best_score = i, score
            chosen.append(best)
        return [candidates[i] for i in chosen]

    if strategy == "class":
        chosen, seen = [], set()
        for i, inst in enumerate(candidates):
            if inst.class_name not in seen:
                chosen.append(i)
                seen.add(inst.class_name)
            if len(chosen) == num_hints:
                break
        for i in range(len(candidates)):
            if len(chosen) == num_hints:
                break
            if i not in chosen:
                chosen.append(i)
        return [candidates[i] for i in chosen]

    raise ValueError(f"unknown selection strategy '{strategy}'")
