## services/queries/types.py

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from services.queries.language import render_hint
from services.scene.types import Provenance


@dataclass
class Hint:
    text: str
    target_id: str
    class_name: str
    direction: str
    color: str
    offset: np.ndarray  # position - target center, meters
    provenance: Provenance = Provenance.LABELED

    def __post_init__(self) -> None:
        self.offset = np.asarray(self.offset, dtype=np.float64).reshape(2)

    def rendered(self) -> str:
        return render_hint(self.direction, self.color, self.class_name)

    def target_center(self, position: np.ndarray) -> np.ndarray:
        return np.asarray(position, dtype=np.float64) - self.offset

    def to_dict(self) -> Dict[str, Any]:
        return {
            "text": self.text,
            "target": self.target_id,
            "class": self.class_name,
            "direction": self.direction,
            "color": self.color,
            "offset": [float(v) for v in self.offset],
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Hint":
        return cls(
            text=data["text"],
            target_id=data["target"],
            class_name=data["class"],
            direction=data["direction"],
            color=data["color"],
            offset=np.array(data["offset"], dtype=np.float64),
            provenance=Provenance(data.get("provenance", "labeled")),
        )


@dataclass
class QueryDescription:
    id: str
    scene_id: str
    position: np.ndarray
    hints: List[Hint]
    strategy: str
    street: str = ""

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=np.float64).reshape(2)

    def key(self) -> Tuple[str, ...]:
        """Order-free identity of the description text"""
        return tuple(sorted(h.text for h in self.hints))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "scene": self.scene_id,
            "position": [float(v) for v in self.position],
            "strategy": self.strategy,
            "street": self.street,
            "hints": [h.to_dict() for h in self.hints],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "QueryDescription":
        return cls(
            id=data["id"],
            scene_id=data["scene"],
            position=np.array(data["position"], dtype=np.float64),
            hints=[Hint.from_dict(h) for h in data["hints"]],
            strategy=data["strategy"],
            street=data.get("street", ""),
        )


@dataclass
class QueryPosition:
    """A sampled position with its candidate targets sorted by (distance, id)"""
    id: str
    index: int
    xy: np.ndarray
    candidates: List = field(default_factory=list)


@dataclass
class DatasetStats:
    scene_id: str
    positions: int
    descriptions: int
    unique_descriptions: int
    area_m2: float

    @property
    def unique_ratio(self) -> float:
        return self.unique_descriptions / self.descriptions if self.descriptions else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scene": self.scene_id,
            "positions": self.positions,
            "descriptions": self.descriptions,
            "unique_descriptions": self.unique_descriptions,
            "unique_ratio": self.unique_ratio,
            "area_m2": self.area_m2,
        }
