## services/celldb/grid.py

"""
Sliding-window cell database: anchors, in-cell assignment, stuff clustering,
cut-off, padding and normalization.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from typing import List, Optional, Sequence

import numpy as np

from config.experiment import CellGridConfig
from core.errors import InsufficientInstancesError, SceneError, StreetLookupError
from services.celldb.types import Cell, CellDatabase, CellInstance
from services.queries.sampling import StuffClustering
from services.scene.clustering import cluster_stuff
from services.scene.types import Instance, Provenance, Scene

log = logging.getLogger(__name__)

_PENDING = "pending"


def axis_anchors(lo: float, hi: float, size: float, stride: float) -> np.ndarray:
    """lo + k * stride up to hi - size, plus a final anchor flush with hi"""
    span = hi - lo - size
    if span < -1e-9:
        raise SceneError(f"extent {hi - lo} m is smaller than the cell size {size} m")
    count = int(np.floor(span / stride + 1e-9)) + 1
    anchors = lo + stride * np.arange(count)
    if hi - size - anchors[-1] > 1e-9:
        anchors = np.append(anchors, hi - size)
    return anchors


def cell_anchors(extent: Sequence[float], size: float, stride: float) -> np.ndarray:
    """(n, 2) southwest corners, rows outer (y), columns inner (x)"""
    x0, y0, x1, y1 = (float(v) for v in extent)
    xs = axis_anchors(x0, x1, size, stride)
    ys = axis_anchors(y0, y1, size, stride)
    return np.array([(x, y) for y in ys for x in xs], dtype=np.float64)


def _inside(points: np.ndarray, origin: np.ndarray, size: float) -> np.ndarray:
    return (
        (points[:, 0] >= origin[0]) & (points[:, 0] <= origin[0] + size)
        & (points[:, 1] >= origin[1]) & (points[:, 1] <= origin[1] + size)
    )


def assign_in_cell(instance: Instance, origin: Sequence[float], config: CellGridConfig) -> bool:
    """A third of the points inside, or at least min_overlap_points inside"""
    inside = int(_inside(instance.points, np.asarray(origin, dtype=np.float64), config.size).sum())
    if inside == 0:
        return False
    return inside / len(instance.points) >= config.third_rule or inside >= config.min_overlap_points


def collect_instances(
    scene: Scene,
    origin: np.ndarray,
    config: CellGridConfig,
    clustering: StuffClustering,
) -> List[CellInstance]:
    """Assigned labeled instances cropped to the cell, then cell-local stuff clusters"""
    found: List[CellInstance] = []
    for inst in scene.instances:
        mask = _inside(inst.points, origin, config.size)
        if not mask.any():
            continue
        if assign_in_cell(inst, origin, config):
            found.append(CellInstance(inst.id, inst.class_name, inst.points[mask], inst.provenance))

    for class_name, points in scene.stuff.items():
        if len(points) == 0:
            continue
        local = points[_inside(points, origin, config.size)]
        for inst in cluster_stuff(local, class_name, clustering.eps, clustering.min_cluster_points, _PENDING):
            found.append(CellInstance(inst.id, inst.class_name, inst.points, Provenance.CLUSTERED))
    return found


def pad_and_normalize(cell: Cell, config: CellGridConfig, seed: int = 0) -> Cell:
    """
    Cut off to the max_instances largest real instances (ties keep the
    earlier one), map coordinates to the cell frame divided by the cell size
    and append black dummy instances up to max_instances. Already normalized
    cells are returned unchanged.
    """
    if cell.normalized:
        return cell
    real = cell.real_instances()
    if not real:
        raise InsufficientInstancesError(f"cell {cell.id} has no real instances")

    if len(real) > config.max_instances:
        order = sorted(range(len(real)), key=lambda i: (-len(real[i]), i))[:config.max_instances]
        real = [real[i] for i in sorted(order)]

    offset = np.array([cell.origin[0], cell.origin[1], 0.0])
    normalized = []
    for inst in real:
        points = inst.points.copy()
        points[:, :3] = (points[:, :3] - offset) / cell.size
        normalized.append(CellInstance(inst.id, inst.class_name, points, inst.provenance))

    rng = np.random.default_rng([seed, cell.id])
    for k in range(config.max_instances - len(real)):
        xyz = rng.uniform(0.0, config.pad_extent, size=(config.pad_points, 3))
        normalized.append(CellInstance(
            f"pad-{k}", "padding", np.hstack([xyz, np.zeros((config.pad_points, 3))]), Provenance.PADDING,
        ))

    return Cell(
        id=cell.id,
        scene_id=cell.scene_id,
        origin=cell.origin,
        size=cell.size,
        instances=normalized,
        street=cell.street,
        normalized=True,
    )


def _rename_clusters(instances: List[CellInstance], prefix: str) -> List[CellInstance]:
    for inst in instances:
        if inst.id.startswith(_PENDING + "/"):
            inst.id = prefix + inst.id[len(_PENDING):]
    return instances


def sample_cells(
    scene: Scene,
    config: CellGridConfig,
    clustering: Optional[StuffClustering] = None,
    seed: int = 0,
    workers: int = 1,
) -> CellDatabase:
    """
    Slide a W x W window with stride S over the scene, keep windows with at
    least min_instances real instances, then cut off, pad and normalize.
    Kept cells are numbered in anchor order.
    """
    clustering = clustering or StuffClustering(window=config.size)
    anchors = cell_anchors(scene.extent, config.size, config.stride)

    def collect(origin: np.ndarray) -> List[CellInstance]:
        return collect_instances(scene, origin, config, clustering)

    with ThreadPoolExecutor(max_workers=workers) as executor:
        collected = list(executor.map(collect, anchors))

    cells: List[Cell] = []
    for origin, instances in zip(anchors, collected):
        if len(instances) < config.min_instances:
            continue
        cell_id = len(cells)
        street = ""
        if scene.streets is not None:
            try:
                street = scene.streets.street_of(origin + config.size / 2)
            except StreetLookupError:
                street = ""
        raw = Cell(
            id=cell_id,
            scene_id=scene.id,
            origin=origin,
            size=config.size,
            instances=_rename_clusters(instances, f"{scene.id}/cell-{cell_id}"),
            street=street,
        )
        cells.append(pad_and_normalize(raw, config, seed))

    log.info(f"[ CELLS ] {scene.id}: {len(anchors)} anchors, {len(cells)} cells kept")
    return CellDatabase(
        scene_id=scene.id,
        size=config.size,
        stride=config.stride,
        cells=cells,
        config=asdict(config),
    )
