## services/scene/streets.py

"""
Street partition of a scene: disjoint named rectangles covering the extent.
Cells take the street of the region holding their center; queries take the
street of the region holding their position.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import yaml

from core.errors import StreetLookupError

_EPS = 1e-9


@dataclass(frozen=True)
class Region:
    name: str
    bounds: tuple  # xmin, ymin, xmax, ymax

    @property
    def area(self) -> float:
        x0, y0, x1, y1 = self.bounds
        return (x1 - x0) * (y1 - y0)


class StreetMap:
    def __init__(self, regions: Sequence[Region], extent: Sequence[float]):
        self.regions: List[Region] = list(regions)
        self.extent = tuple(float(v) for v in extent)
        self._validate()

    def _validate(self) -> None:
        x0, y0, x1, y1 = self.extent
        for i, a in enumerate(self.regions):
            for b in self.regions[i + 1:]:
                ox = min(a.bounds[2], b.bounds[2]) - max(a.bounds[0], b.bounds[0])
                oy = min(a.bounds[3], b.bounds[3]) - max(a.bounds[1], b.bounds[1])
                if ox > _EPS and oy > _EPS:
                    raise StreetLookupError(f"streets '{a.name}' and '{b.name}' overlap")
        covered = sum(r.area for r in self.regions)
        if abs(covered - (x1 - x0) * (y1 - y0)) > 1e-6:
            raise StreetLookupError("streets do not cover the scene extent")

    @classmethod
    def grid(cls, extent: Sequence[float], nx: int, ny: int) -> "StreetMap":
        x0, y0, x1, y1 = (float(v) for v in extent)
        xs = np.linspace(x0, x1, nx + 1)
        ys = np.linspace(y0, y1, ny + 1)
        regions = [
            Region(f"street-{iy * nx + ix}", (xs[ix], ys[iy], xs[ix + 1], ys[iy + 1]))
            for iy in range(ny)
            for ix in range(nx)
        ]
        return cls(regions, extent)

    def street_of(self, xy: Sequence[float]) -> str:
        """Half-open lookup; the far scene boundary belongs to the last region"""
        x, y = float(xy[0]), float(xy[1])
        ex0, ey0, ex1, ey1 = self.extent
        for region in self.regions:
            x0, y0, x1, y1 = region.bounds
            in_x = x0 - _EPS <= x < x1 or (abs(x1 - ex1) < _EPS and abs(x - x1) <= _EPS)
            in_y = y0 - _EPS <= y < y1 or (abs(y1 - ey1) < _EPS and abs(y - y1) <= _EPS)
            if in_x and in_y:
                return region.name
        raise StreetLookupError(f"position ({x:.2f}, {y:.2f}) lies outside every street")

    def names(self) -> List[str]:
        return [r.name for r in self.regions]

    def to_dict(self) -> Dict:
        return {
            "extent": list(self.extent),
            "regions": [{"name": r.name, "bounds": [float(v) for v in r.bounds]} for r in self.regions],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "StreetMap":
        regions = [Region(r["name"], tuple(float(v) for v in r["bounds"])) for r in data["regions"]]
        return cls(regions, data["extent"])

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "StreetMap":
        with open(path, "r") as f:
            return cls.from_dict(yaml.safe_load(f))

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))
        return path
