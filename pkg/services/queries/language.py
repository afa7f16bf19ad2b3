## services/queries/language.py

"""
The closed hint grammar: compass directions, the sentence template and the
word-level flips used by augmentation.
"""
import math
import re
from typing import List, Sequence

import numpy as np

# counterclockwise from east, one entry per 45 degree sector
DIRECTIONS = ["east", "northeast", "north", "northwest", "west", "southwest", "south", "southeast"]
ON_TOP = "on top of"
DIRECTION_WORDS = DIRECTIONS + [ON_TOP]

TEMPLATE = "The pose is {direction} of a {color} {class_name}."
FUNCTION_WORDS = ["the", "pose", "is", "of", "a", "on", "top"]

_FLIP_X = {"east": "west", "northeast": "northwest", "southeast": "southwest"}
_FLIP_Y = {"north": "south", "northeast": "southeast", "northwest": "southwest"}
_FLIP_X.update({v: k for k, v in list(_FLIP_X.items())})
_FLIP_Y.update({v: k for k, v in list(_FLIP_Y.items())})

_ZERO = 1e-6


def direction_word(offset: Sequence[float]) -> str:
    """
    Compass word for an offset from a target center to the position.

    Sector boundaries sit at odd multiples of 22.5 degrees; an offset exactly
    on a boundary belongs to the counterclockwise sector.
    """
    dx, dy = float(offset[0]), float(offset[1])
    if math.hypot(dx, dy) < _ZERO:
        return ON_TOP
    angle = math.degrees(math.atan2(dy, dx))
    return DIRECTIONS[int(math.floor((angle + 22.5) / 45.0)) % 8]


def render_hint(direction: str, color: str, class_name: str) -> str:
    if direction == ON_TOP:
        return f"The pose is on top of a {color} {class_name}."
    return TEMPLATE.format(direction=direction, color=color, class_name=class_name)


def tokenize(text: str) -> List[str]:
    return re.findall(r"[a-z]+", text.lower())


def flip_direction(word: str, axis: int) -> str:
    """Mirror a direction word across the vertical (axis 0) or horizontal (axis 1) cell midline"""
    table = _FLIP_X if axis == 0 else _FLIP_Y
    return table.get(word, word)


def angle_between(u: Sequence[float], v: Sequence[float]) -> float:
    """Unsigned angle in degrees between two 2D vectors; 0 when either is zero"""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < _ZERO or nv < _ZERO:
        return 0.0
    cos = np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)))
