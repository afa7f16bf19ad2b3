## services/scene/types.py

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, NamedTuple, Optional

import numpy as np

from core.errors import SceneError

# Column layout of every point array: x, y, z in meters, then r, g, b in [0, 1].
POINT_COLUMNS = ("x", "y", "z", "r", "g", "b")


class Point(NamedTuple):
    x: float
    y: float
    z: float
    r: float
    g: float
    b: float


class ClassKind(str, Enum):
    INSTANCE = "instance"
    STUFF = "stuff"


class Provenance(str, Enum):
    LABELED = "labeled"
    CLUSTERED = "clustered"
    PADDING = "padding"


@dataclass(frozen=True)
class SemanticClass:
    name: str
    kind: ClassKind
    index: int


class ClassRegistry:
    """Fixed, ordered set of semantic classes for one dataset"""

    def __init__(self, instance_classes: Iterable[str], stuff_classes: Iterable[str]):
        self._classes: Dict[str, SemanticClass] = {}
        for name in instance_classes:
            self._add(name, ClassKind.INSTANCE)
        for name in stuff_classes:
            self._add(name, ClassKind.STUFF)
        if not self.instance_classes():
            raise SceneError("class registry has no instance classes")

    def _add(self, name: str, kind: ClassKind) -> None:
        if name in self._classes:
            raise SceneError(f"duplicate class '{name}'")
        self._classes[name] = SemanticClass(name, kind, len(self._classes))

    def __getitem__(self, name: str) -> SemanticClass:
        try:
            return self._classes[name]
        except KeyError:
            raise SceneError(f"unknown class '{name}'") from None

    def __contains__(self, name: str) -> bool:
        return name in self._classes

    def __len__(self) -> int:
        return len(self._classes)

    def names(self) -> List[str]:
        return list(self._classes)

    def instance_classes(self) -> List[str]:
        return [c.name for c in self._classes.values() if c.kind is ClassKind.INSTANCE]

    def stuff_classes(self) -> List[str]:
        return [c.name for c in self._classes.values() if c.kind is ClassKind.STUFF]

    def is_stuff(self, name: str) -> bool:
        return self[name].kind is ClassKind.STUFF

    def to_dict(self) -> Dict[str, List[str]]:
        return {"instance": self.instance_classes(), "stuff": self.stuff_classes()}

    @classmethod
    def from_dict(cls, data: Dict[str, List[str]]) -> "ClassRegistry":
        return cls(data["instance"], data["stuff"])


@dataclass
class Instance:
    id: str
    class_name: str
    points: np.ndarray
    provenance: Provenance = Provenance.LABELED
    center: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 6)
        if len(self.points) == 0:
            raise SceneError(f"instance '{self.id}' has no points")
        self.center = self.points[:, :3].mean(axis=0)

    @property
    def mean_color(self) -> np.ndarray:
        return self.points[:, 3:6].mean(axis=0)

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class Scene:
    id: str
    extent: np.ndarray  # xmin, ymin, xmax, ymax
    registry: ClassRegistry
    instances: List[Instance]
    stuff: Dict[str, np.ndarray]
    trajectory: np.ndarray
    seed: int
    streets: Optional["StreetMap"] = None  # noqa: F821

    @property
    def width(self) -> float:
        return float(self.extent[2] - self.extent[0])

    @property
    def height(self) -> float:
        return float(self.extent[3] - self.extent[1])

    def instance_centers(self) -> np.ndarray:
        if not self.instances:
            return np.zeros((0, 3))
        return np.stack([inst.center for inst in self.instances])

    def contains(self, xy: np.ndarray, slack: float = 1e-9) -> np.ndarray:
        xy = np.atleast_2d(xy)
        x0, y0, x1, y1 = self.extent
        return (
            (xy[:, 0] >= x0 - slack) & (xy[:, 0] <= x1 + slack)
            & (xy[:, 1] >= y0 - slack) & (xy[:, 1] <= y1 + slack)
        )
