## services/scene/generator.py

"""
Procedural city-district scenes.

A scene is a square grid of roads with sidewalks on both sides, a serpentine
vehicle trajectory along the roads, rows of small street furniture on the
sidewalks and buildings behind them. Stuff classes (road, sidewalk, terrain,
vegetation, fence, wall) are emitted as raw labeled points and only become
instances through cell-local clustering.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from config.experiment import SceneConfig
from core.errors import SceneError
from services.scene.palette import PALETTE, colors_for
from services.scene.streets import StreetMap
from services.scene.types import ClassRegistry, Instance, Provenance, Scene

log = logging.getLogger(__name__)

LARGE_CLASSES = ("building", "garage")
# shape kind and (length, width, height) ranges per class
SHAPES: Dict[str, Tuple[str, Tuple[float, float], Tuple[float, float], Tuple[float, float]]] = {
    "building": ("box", (8.0, 16.0), (8.0, 14.0), (5.0, 15.0)),
    "garage": ("box", (4.0, 6.0), (5.0, 7.0), (2.5, 3.5)),
    "bus stop": ("box", (3.0, 5.0), (1.2, 1.8), (2.2, 2.8)),
    "pole": ("cylinder", (0.25, 0.35), (0.25, 0.35), (5.0, 8.0)),
    "traffic light": ("cylinder", (0.3, 0.4), (0.3, 0.4), (3.5, 5.0)),
    "traffic sign": ("plane", (0.6, 1.0), (0.05, 0.05), (2.0, 2.8)),
    "trash bin": ("cylinder", (0.6, 0.9), (0.6, 0.9), (0.9, 1.2)),
}
DEFAULT_SHAPE = ("box", (1.0, 2.0), (1.0, 2.0), (1.0, 2.0))
SMALL_FILL = ("pole", "trash bin")


@dataclass
class _Segment:
    """One side of one road between two intersections"""
    axis: int  # 0: road runs along x, 1: along y
    line: float  # coordinate of the road center line
    side: int  # +1 or -1
    lo: float
    hi: float


def _road_lines(extent: float, cfg: SceneConfig) -> List[float]:
    lines = list(np.arange(cfg.road_margin, extent - cfg.road_margin + 1e-9, cfg.road_spacing))
    return [float(v) for v in lines] or [extent / 2.0]


def _free_intervals(lo: float, hi: float, cuts: Sequence[float], half: float) -> List[Tuple[float, float]]:
    """Split [lo, hi] around every cut +- half"""
    intervals = []
    start = lo
    for c in sorted(cuts):
        if c - half > start:
            intervals.append((start, min(c - half, hi)))
        start = max(start, c + half)
    if start < hi:
        intervals.append((start, hi))
    return [(a, b) for a, b in intervals if b - a > 1e-6]


def _colorize(rng: np.random.Generator, n: int, color: str, noise: float) -> np.ndarray:
    rgb = np.asarray(PALETTE[color]) + rng.normal(0.0, noise, size=(n, 3))
    return np.clip(rgb, 0.0, 1.0)


def _rect_points(rng, bounds, z: float, density: float, color: str, noise: float) -> np.ndarray:
    x0, y0, x1, y1 = bounds
    n = int(round((x1 - x0) * (y1 - y0) * density))
    if n <= 0:
        return np.zeros((0, 6))
    xy = rng.uniform([x0, y0], [x1, y1], size=(n, 2))
    zs = z + rng.normal(0.0, 0.03, size=(n, 1))
    return np.hstack([xy, zs, _colorize(rng, n, color, noise)])


def _box_points(rng, center, size, yaw: float, n: int) -> np.ndarray:
    """Points on the walls and roof of an oriented box standing on z=0"""
    length, width, height = size
    faces = np.array([length * height, length * height, width * height, width * height, length * width])
    face = rng.choice(5, size=n, p=faces / faces.sum())
    u = rng.uniform(-0.5, 0.5, size=n)
    v = rng.uniform(0.0, 1.0, size=n)
    local = np.zeros((n, 3))
    for f, (sx, sy) in enumerate([(0, 1), (0, -1), (1, 0), (-1, 0)]):
        sel = face == f
        if sx == 0:
            local[sel] = np.c_[u[sel] * length, np.full(sel.sum(), sy * width / 2), v[sel] * height]
        else:
            local[sel] = np.c_[np.full(sel.sum(), sx * length / 2), u[sel] * width, v[sel] * height]
    roof = face == 4
    local[roof] = np.c_[u[roof] * length, rng.uniform(-0.5, 0.5, roof.sum()) * width, np.full(roof.sum(), height)]
    return _place(local, center, yaw)


def _cylinder_points(rng, center, radius: float, height: float, n: int) -> np.ndarray:
    angle = rng.uniform(0.0, 2 * np.pi, size=n)
    local = np.c_[radius * np.cos(angle), radius * np.sin(angle), rng.uniform(0.0, height, size=n)]
    return _place(local, center, 0.0)


def _plane_points(rng, center, width: float, height: float, yaw: float, n: int) -> np.ndarray:
    # sign plate on top of a thin post
    post = n // 3
    plate = n - post
    local = np.vstack([
        np.c_[np.zeros(post), np.zeros(post), rng.uniform(0.0, height - 0.6, post)],
        np.c_[rng.uniform(-width / 2, width / 2, plate), np.zeros(plate), rng.uniform(height - 0.6, height, plate)],
    ])
    return _place(local, center, yaw)


def _place(local: np.ndarray, center, yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return local @ rot.T + np.array([center[0], center[1], 0.0])


def _hemisphere_points(rng, center, radius: float, n: int) -> np.ndarray:
    direction = rng.normal(size=(n, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    direction[:, 2] = np.abs(direction[:, 2])
    return direction * radius + np.array([center[0], center[1], 0.0])


class SceneGenerator:
    """Builds one scene from a SceneConfig and a seed"""

    def __init__(self, config: SceneConfig, cell_size: float = 30.0):
        self.config = config
        self.cell_size = cell_size

    def _count(self, area: float) -> int:
        cfg = self.config
        return int(np.clip(round(area * cfg.surface_density), cfg.min_instance_points, cfg.max_instance_points))

    def _shape_points(self, rng, class_name: str, center, yaw: float) -> Tuple[np.ndarray, float]:
        kind, (l0, l1), (w0, w1), (h0, h1) = SHAPES.get(class_name, DEFAULT_SHAPE)
        length, width, height = rng.uniform(l0, l1), rng.uniform(w0, w1), rng.uniform(h0, h1)
        if kind == "box":
            area = 2 * (length + width) * height + length * width
            xyz = _box_points(rng, center, (length, width, height), yaw, self._count(area))
        elif kind == "cylinder":
            radius = length / 2
            xyz = _cylinder_points(rng, center, radius, height, self._count(2 * np.pi * radius * height))
        else:
            xyz = _plane_points(rng, center, length, height, yaw, self._count(length * height * 4))
        color = str(rng.choice(colors_for(class_name)))
        rgb = _colorize(rng, len(xyz), color, self.config.color_noise)
        return np.hstack([xyz, rgb]), width

    def generate(self, seed: int, scene_id: Optional[str] = None) -> Scene:
        cfg = self.config
        if not cfg.instance_classes:
            raise SceneError("scene config has no instance classes")
        if cfg.extent < 2 * self.cell_size:
            raise SceneError(f"scene extent {cfg.extent} m is smaller than twice the cell size {self.cell_size} m")
        registry = ClassRegistry(cfg.instance_classes, cfg.stuff_classes)

        rng = np.random.default_rng(seed)
        E = float(cfg.extent)
        lines = _road_lines(E, cfg)
        half_road = cfg.road_width / 2
        trajectory = self._trajectory(E, lines)
        segments = self._segments(E, lines)

        stuff = self._stuff(rng, registry, E, lines, segments)
        instances: List[Instance] = []
        for segment in segments:
            instances.extend(self._furnish(rng, registry, segment, E, len(instances)))
        instances.extend(self._densify(rng, registry, trajectory, instances, half_road))

        scene = Scene(
            id=scene_id or f"scene-{seed}",
            extent=np.array([0.0, 0.0, E, E]),
            registry=registry,
            instances=instances,
            stuff=stuff,
            trajectory=trajectory,
            seed=seed,
            streets=StreetMap.grid((0.0, 0.0, E, E), *cfg.streets),
        )
        log.info(
            f"[ SCENE ] {scene.id}: {len(instances)} instances, "
            f"{sum(len(v) for v in stuff.values())} stuff points, {len(trajectory)} trajectory vertices"
        )
        return scene

    @staticmethod
    def _trajectory(E: float, lines: List[float]) -> np.ndarray:
        x_lo, x_hi = lines[0], lines[-1]
        if x_hi - x_lo < 1e-6:
            x_lo, x_hi = E * 0.1, E * 0.9
        vertices = []
        for i, y in enumerate(lines):
            row = [(x_lo, y), (x_hi, y)]
            vertices.extend(row if i % 2 == 0 else row[::-1])
        return np.array(vertices, dtype=np.float64)

    def _segments(self, E: float, lines: List[float]) -> List[_Segment]:
        cfg = self.config
        half = cfg.road_width / 2 + cfg.sidewalk_width
        segments = []
        for axis in (0, 1):
            for line in lines:
                for lo, hi in _free_intervals(0.0, E, lines, half):
                    for side in (-1, 1):
                        segments.append(_Segment(axis, line, side, lo, hi))
        return segments

    def _strip(self, segment: _Segment, offset_lo: float, offset_hi: float) -> Tuple[float, float, float, float]:
        """Rectangle along a segment between two lateral offsets from the road center line"""
        a = segment.line + segment.side * offset_lo
        b = segment.line + segment.side * offset_hi
        lat0, lat1 = min(a, b), max(a, b)
        if segment.axis == 0:
            return segment.lo, lat0, segment.hi, lat1
        return lat0, segment.lo, lat1, segment.hi

    def _at(self, segment: _Segment, along: float, lateral: float) -> np.ndarray:
        across = segment.line + segment.side * lateral
        return np.array([along, across]) if segment.axis == 0 else np.array([across, along])

    def _stuff(self, rng, registry: ClassRegistry, E: float, lines, segments) -> Dict[str, np.ndarray]:
        cfg = self.config
        noise = cfg.color_noise
        half_road = cfg.road_width / 2
        chunks: Dict[str, List[np.ndarray]] = {name: [] for name in registry.stuff_classes()}

        def emit(name: str, pts: np.ndarray) -> None:
            if name in chunks and len(pts):
                keep = (pts[:, 0] >= 0) & (pts[:, 0] <= E) & (pts[:, 1] >= 0) & (pts[:, 1] <= E)
                chunks[name].append(pts[keep])

        # roads: full-length strips along x, vertical strips broken at intersections
        for line in lines:
            emit("road", _rect_points(rng, (0.0, line - half_road, E, line + half_road), 0.0, cfg.ground_density, "black", noise))
            for lo, hi in _free_intervals(0.0, E, lines, half_road):
                emit("road", _rect_points(rng, (line - half_road, lo, line + half_road, hi), 0.0, cfg.ground_density, "black", noise))

        setback = half_road + cfg.sidewalk_width
        for segment in segments:
            emit("sidewalk", _rect_points(rng, self._strip(segment, half_road, setback), 0.15, cfg.ground_density, "gray", noise))
            self._roadside(rng, segment, setback, emit)

        # terrain patches in block interiors
        n_patches = int(E * E / 900)
        for _ in range(n_patches):
            w, h = rng.uniform(8.0, 15.0, size=2)
            x0, y0 = rng.uniform(0.0, E - w), rng.uniform(0.0, E - h)
            color = str(rng.choice(colors_for("terrain")))
            emit("terrain", _rect_points(rng, (x0, y0, x0 + w, y0 + h), 0.05, cfg.ground_density, color, noise))

        return {
            name: (np.vstack(parts) if parts else np.zeros((0, 6)))
            for name, parts in chunks.items()
        }

    def _roadside(self, rng, segment: _Segment, setback: float, emit) -> None:
        """Vegetation blobs and fence or wall runs just behind a sidewalk"""
        cfg = self.config
        along = segment.lo + rng.uniform(1.0, 6.0)
        while along < segment.hi - 4.0:
            roll = rng.uniform()
            if roll < 0.45:
                radius = rng.uniform(2.5, 4.5)
                center = self._at(segment, along + radius, setback + 1.0 + radius * 0.5)
                n = max(cfg.min_instance_points, int(round(2 * np.pi * radius ** 2 * cfg.surface_density)))
                xyz = _hemisphere_points(rng, center, radius, n)
                color = str(rng.choice(colors_for("vegetation")))
                emit("vegetation", np.hstack([xyz, _colorize(rng, n, color, cfg.color_noise)]))
                along += 2 * radius + rng.uniform(3.0, 8.0)
            elif roll < 0.75:
                name = "fence" if roll < 0.6 else "wall"
                length = min(rng.uniform(10.0, 25.0), segment.hi - along)
                height = rng.uniform(1.5, 2.5)
                n = int(round(2 * length * height * cfg.surface_density))
                t = rng.uniform(0.0, length, size=n)
                start = self._at(segment, along, setback + 0.8)
                direction = np.array([1.0, 0.0]) if segment.axis == 0 else np.array([0.0, 1.0])
                xy = start + t[:, None] * direction
                normal = np.array([direction[1], direction[0]])
                xy += rng.choice([-0.1, 0.1], size=(n, 1)) * normal
                xyz = np.c_[xy, rng.uniform(0.0, height, size=n)]
                color = str(rng.choice(colors_for(name)))
                emit(name, np.hstack([xyz, _colorize(rng, n, color, cfg.color_noise)]))
                along += length + rng.uniform(3.0, 8.0)
            else:
                along += rng.uniform(5.0, 10.0)

    def _furnish(self, rng, registry: ClassRegistry, segment: _Segment, E: float, first: int) -> List[Instance]:
        """Street furniture on the sidewalk and buildings behind it"""
        cfg = self.config
        available = registry.instance_classes()
        small = [c for c in available if c not in LARGE_CLASSES]
        large = [c for c in available if c in LARGE_CLASSES]
        half_road = cfg.road_width / 2
        yaw = 0.0 if segment.axis == 0 else np.pi / 2
        instances = []

        def add(class_name: str, center: np.ndarray, lateral_yaw: float = yaw) -> Optional[float]:
            points, width = self._shape_points(rng, class_name, center, lateral_yaw)
            inside = (points[:, 0] >= 0) & (points[:, 0] <= E) & (points[:, 1] >= 0) & (points[:, 1] <= E)
            if not inside.all():
                return None
            instances.append(Instance(
                id=f"obj-{first + len(instances):05d}",
                class_name=class_name,
                points=points,
                provenance=Provenance.LABELED,
            ))
            return width

        if small:
            along = segment.lo + rng.uniform(0.5, cfg.object_spacing)
            while along < segment.hi - 0.5:
                lateral = half_road + cfg.sidewalk_width * rng.uniform(0.3, 0.8)
                add(str(rng.choice(small)), self._at(segment, along, lateral))
                along += cfg.object_spacing * rng.uniform(0.7, 1.3)

        if large:
            along = segment.lo + rng.uniform(1.0, 4.0)
            setback = half_road + cfg.sidewalk_width + rng.uniform(2.0, 5.0)
            while along < segment.hi - 8.0:
                class_name = "garage" if "garage" in large and rng.uniform() < 0.15 else large[0]
                kind, (l0, l1), (w0, w1), _ = SHAPES[class_name]
                length = min((l0 + l1) / 2, segment.hi - along)
                depth = (w0 + w1) / 2
                center = self._at(segment, along + length / 2, setback + depth / 2)
                add(class_name, center)
                along += length + rng.uniform(2.0, 6.0)
        return instances

    def _densify(self, rng, registry, trajectory: np.ndarray, instances: List[Instance], half_road: float) -> List[Instance]:
        """Add poles or bins where a trajectory sample sees too few instances"""
        cfg = self.config
        fill = [c for c in SMALL_FILL if c in registry] or registry.instance_classes()[:1]
        extra: List[Instance] = []
        lateral = half_road + cfg.sidewalk_width / 2
        for point, heading in _walk(trajectory, 5.0):
            known = instances + extra
            count = 0
            if known:
                centers = np.array([inst.center[:2] for inst in known])
                count = len(cKDTree(centers).query_ball_point(point, cfg.neighbor_radius))
            normal = np.array([-heading[1], heading[0]])
            k = 0
            while count < cfg.min_neighbors:
                side = 1.0 if k % 2 == 0 else -1.0
                center = point + side * lateral * normal + heading * rng.uniform(-8.0, 8.0)
                class_name = fill[k % len(fill)]
                points, _ = self._shape_points(rng, class_name, center, 0.0)
                extra.append(Instance(
                    id=f"obj-{len(instances) + len(extra):05d}",
                    class_name=class_name,
                    points=points,
                    provenance=Provenance.LABELED,
                ))
                count += 1
                k += 1
        if extra:
            log.debug(f"[ SCENE ] Densified trajectory with {len(extra)} extra instances")
        return extra


def _walk(trajectory: np.ndarray, step: float):
    """Yield (point, unit heading) samples every `step` meters along a polyline"""
    heading = np.array([1.0, 0.0])
    if len(trajectory) == 1:
        yield trajectory[0], heading
        return
    for a, b in zip(trajectory[:-1], trajectory[1:]):
        length = float(np.linalg.norm(b - a))
        if length < 1e-9:
            continue
        heading = (b - a) / length
        for t in np.arange(0.0, length, step):
            yield a + heading * t, heading
    yield trajectory[-1], heading


def generate_scene(config: SceneConfig, seed: int, cell_size: float = 30.0, scene_id: Optional[str] = None) -> Scene:
    return SceneGenerator(config, cell_size).generate(seed, scene_id)


def coverage_report(scene: Scene, radius: float, step: float = 5.0) -> Dict[str, float]:
    """Instance counts within `radius` of trajectory samples"""
    centers = scene.instance_centers()[:, :2]
    tree = cKDTree(centers) if len(centers) else None
    counts = [
        len(tree.query_ball_point(point, radius)) if tree is not None else 0
        for point, _ in _walk(scene.trajectory, step)
    ]
    counts = np.asarray(counts)
    return {
        "samples": int(len(counts)),
        "min_neighbors": int(counts.min()) if len(counts) else 0,
        "mean_neighbors": float(counts.mean()) if len(counts) else 0.0,
    }
