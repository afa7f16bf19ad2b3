## services/scene/palette.py

"""
Named color anchors. Generated instances take a palette color plus small
per-point noise, and hints name the anchor nearest to an instance's mean
color.
"""
from typing import Dict, List, Tuple

import numpy as np

PALETTE: Dict[str, Tuple[float, float, float]] = {
    "gray": (0.5, 0.5, 0.5),
    "black": (0.08, 0.08, 0.08),
    "white": (0.92, 0.92, 0.92),
    "red": (0.8, 0.12, 0.1),
    "green": (0.15, 0.55, 0.15),
    "blue": (0.12, 0.25, 0.75),
    "yellow": (0.9, 0.82, 0.15),
    "brown": (0.45, 0.3, 0.15),
    "orange": (0.95, 0.55, 0.1),
}

CLASS_COLORS: Dict[str, List[str]] = {
    "building": ["gray", "white", "red", "brown", "yellow", "orange", "blue"],
    "garage": ["gray", "white", "brown", "red"],
    "bus stop": ["white", "gray", "red", "blue"],
    "pole": ["gray", "black", "white"],
    "traffic light": ["black", "yellow", "gray"],
    "traffic sign": ["blue", "red", "white", "yellow"],
    "trash bin": ["green", "gray", "black", "blue", "orange"],
    "vegetation": ["green", "green", "yellow", "brown"],
    "fence": ["brown", "gray", "white", "green"],
    "wall": ["gray", "white", "red", "yellow"],
    "sidewalk": ["gray"],
    "road": ["black"],
    "terrain": ["brown", "green"],
}


def palette_names() -> List[str]:
    return list(PALETTE)


def palette_matrix() -> np.ndarray:
    return np.array(list(PALETTE.values()), dtype=np.float64)


def nearest_color(rgb) -> str:
    """Palette name nearest in RGB (Euclidean); ties go to the earlier entry"""
    dists = np.linalg.norm(palette_matrix() - np.asarray(rgb, dtype=np.float64), axis=1)
    return palette_names()[int(np.argmin(dists))]


def colors_for(class_name: str) -> List[str]:
    return CLASS_COLORS.get(class_name, palette_names())
