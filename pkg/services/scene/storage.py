## services/scene/storage.py

"""
Scene files and the labeled point-cloud import path.

Scenes are written as "scene" containers: header with extent, seed, class
registry, street partition and the instance table; payload with the stacked
instance points, one array per stuff class and the trajectory.

External data enters through "labeled_cloud" containers holding per-point
class and instance labels (instance -1 for stuff points), which is how real
survey data can be attached without touching the generator.
"""
import logging
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from core.container import read_container, write_container
from core.errors import SceneError
from services.scene.streets import StreetMap
from services.scene.types import ClassRegistry, Instance, Provenance, Scene

log = logging.getLogger(__name__)

SCENE_KIND = "scene"
CLOUD_KIND = "labeled_cloud"


def save_scene(scene: Scene, path: Union[str, Path]) -> Path:
    table = [
        {"id": inst.id, "class": inst.class_name, "provenance": inst.provenance.value, "count": len(inst)}
        for inst in scene.instances
    ]
    meta = {
        "id": scene.id,
        "extent": [float(v) for v in scene.extent],
        "seed": int(scene.seed),
        "classes": scene.registry.to_dict(),
        "streets": scene.streets.to_dict() if scene.streets is not None else None,
        "instances": table,
        "stuff": list(scene.stuff),
    }
    arrays = {
        "instance_points": (
            np.vstack([inst.points for inst in scene.instances]) if scene.instances else np.zeros((0, 6))
        ),
        "trajectory": scene.trajectory,
    }
    for name, points in scene.stuff.items():
        arrays[f"stuff/{name}"] = points
    return write_container(path, SCENE_KIND, meta, arrays)


def load_scene(path: Union[str, Path]) -> Scene:
    meta, arrays = read_container(path, SCENE_KIND)
    points = arrays["instance_points"]
    instances = []
    offset = 0
    for entry in meta["instances"]:
        count = entry["count"]
        instances.append(Instance(
            id=entry["id"],
            class_name=entry["class"],
            points=points[offset:offset + count],
            provenance=Provenance(entry["provenance"]),
        ))
        offset += count
    return Scene(
        id=meta["id"],
        extent=np.array(meta["extent"], dtype=np.float64),
        registry=ClassRegistry.from_dict(meta["classes"]),
        instances=instances,
        stuff={name: arrays[f"stuff/{name}"] for name in meta["stuff"]},
        trajectory=arrays["trajectory"],
        seed=meta["seed"],
        streets=StreetMap.from_dict(meta["streets"]) if meta["streets"] else None,
    )


class PointCloudValidator:
    """Row-level checks for labeled point clouds entering through the import path"""

    MAX_POINTS = 50_000_000

    def valid_rows(self, rows: np.ndarray, registry: ClassRegistry) -> np.ndarray:
        """
        Mask of usable rows in an (n, 8) array of x, y, z, r, g, b, class, instance.

        A row is dropped when its coordinates are non-finite, a color leaves
        [0, 1], its class index is unknown, a stuff row carries an instance
        label, an instance-class row carries none, or its instance was first
        seen with a different class.
        """
        if rows.ndim != 2 or rows.shape[1] != 8:
            raise SceneError(f"labeled rows must have shape (n, 8), got {rows.shape}")
        if len(rows) > self.MAX_POINTS:
            raise SceneError(f"too many points: {len(rows)} (max: {self.MAX_POINTS})")

        reasons: Dict[str, np.ndarray] = {}
        reasons["non-finite values"] = ~np.isfinite(rows).all(axis=1)
        colors = np.nan_to_num(rows[:, 3:6], nan=-1.0)
        reasons["color outside [0, 1]"] = ((colors < 0.0) | (colors > 1.0)).any(axis=1)

        cls = np.nan_to_num(rows[:, 6], nan=-1.0)
        known = (cls >= 0) & (cls < len(registry)) & (cls == np.round(cls))
        reasons["unknown class"] = ~known
        cls = np.where(known, cls, 0).astype(np.int64)
        instance = np.nan_to_num(rows[:, 7], nan=-1.0).astype(np.int64)

        is_stuff = np.array([registry.is_stuff(name) for name in registry.names()], dtype=bool)[cls]
        reasons["stuff row with instance label"] = known & is_stuff & (instance != -1)
        reasons["instance row without label"] = known & ~is_stuff & (instance < 0)

        mixed = np.zeros(len(rows), dtype=bool)
        first_class: Dict[int, int] = {}
        for i in np.flatnonzero(known & ~is_stuff & (instance >= 0)):
            expected = first_class.setdefault(int(instance[i]), int(cls[i]))
            mixed[i] = expected != cls[i]
        reasons["instance mixes classes"] = mixed

        bad = np.zeros(len(rows), dtype=bool)
        for reason, mask in reasons.items():
            fresh = mask & ~bad
            if fresh.any():
                log.warning(f"[ IMPORT ] Skipping {int(fresh.sum())} rows: {reason}")
            bad |= mask
        return ~bad


def import_point_cloud(
    rows: np.ndarray,
    registry: ClassRegistry,
    extent: Optional[Sequence[float]],
    trajectory: np.ndarray,
    scene_id: str,
    streets: Tuple[int, int] = (3, 3),
    seed: int = 0,
) -> Scene:
    """Build a Scene from labeled rows; invalid rows are counted and skipped"""
    rows = np.asarray(rows, dtype=np.float64)
    keep = PointCloudValidator().valid_rows(rows, registry)
    skipped = int((~keep).sum())
    rows = rows[keep]
    if len(rows) == 0:
        raise SceneError(f"{scene_id}: no valid rows to import")

    trajectory = np.asarray(trajectory, dtype=np.float64).reshape(-1, 2)
    if len(trajectory) == 0:
        raise SceneError(f"{scene_id}: trajectory is empty")

    points = rows[:, :6]
    class_index = rows[:, 6].astype(np.int64)
    instance = rows[:, 7].astype(np.int64)
    if extent is None:
        extent = np.r_[points[:, :2].min(axis=0), points[:, :2].max(axis=0)]
    extent = np.asarray(extent, dtype=np.float64)

    names = registry.names()
    instances = []
    for label in np.unique(instance[instance >= 0]):
        members = instance == label
        instances.append(Instance(
            id=f"obj-{int(label):05d}",
            class_name=names[int(class_index[members][0])],
            points=points[members],
            provenance=Provenance.LABELED,
        ))
    stuff = {
        name: points[(class_index == names.index(name)) & (instance < 0)]
        for name in registry.stuff_classes()
    }

    scene = Scene(
        id=scene_id,
        extent=extent,
        registry=registry,
        instances=instances,
        stuff=stuff,
        trajectory=trajectory,
        seed=seed,
        streets=StreetMap.grid(extent, *streets),
    )
    if not (scene.contains(points[:, :2]).all() and scene.contains(trajectory).all()):
        raise SceneError(f"{scene_id}: points or trajectory outside extent {extent.tolist()}")
    log.info(f"[ IMPORT ] {scene_id}: {len(instances)} instances from {len(points)} points, {skipped} rows skipped")
    return scene


def scene_rows(scene: Scene) -> np.ndarray:
    """Flatten a scene into labeled (n, 8) rows, the inverse of the import path"""
    index = {name: i for i, name in enumerate(scene.registry.names())}
    blocks = []
    for k, inst in enumerate(scene.instances):
        labels = np.tile([index[inst.class_name], k], (len(inst), 1))
        blocks.append(np.hstack([inst.points, labels]))
    for name, points in scene.stuff.items():
        labels = np.tile([index[name], -1], (len(points), 1))
        blocks.append(np.hstack([points, labels]))
    return np.vstack(blocks) if blocks else np.zeros((0, 8))


def write_labeled_cloud(
    path: Union[str, Path],
    rows: np.ndarray,
    registry: ClassRegistry,
    trajectory: np.ndarray,
    extent: Optional[Sequence[float]] = None,
) -> Path:
    meta = {
        "classes": registry.to_dict(),
        "extent": [float(v) for v in extent] if extent is not None else None,
    }
    arrays = {
        "rows": np.asarray(rows, dtype=np.float64),
        "trajectory": np.asarray(trajectory, dtype=np.float64),
    }
    return write_container(path, CLOUD_KIND, meta, arrays)


def import_labeled_cloud(
    path: Union[str, Path],
    scene_id: str,
    streets: Tuple[int, int] = (3, 3),
    seed: int = 0,
) -> Scene:
    meta, arrays = read_container(path, CLOUD_KIND)
    return import_point_cloud(
        arrays["rows"],
        ClassRegistry.from_dict(meta["classes"]),
        meta.get("extent"),
        arrays["trajectory"],
        scene_id,
        streets=streets,
        seed=seed,
    )
