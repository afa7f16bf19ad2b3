## services/reporting/render.py

"""
Top-down PNG preview of a cell: semantic class colors on the left, point RGB
on the right.
"""
import logging
from pathlib import Path
from typing import Union

import numpy as np
from matplotlib import colormaps
from PIL import Image, ImageDraw

from config.experiment import INSTANCE_CLASSES, STUFF_CLASSES
from services.celldb.types import Cell

log = logging.getLogger(__name__)

BACKGROUND = (255, 255, 255)
MAX_DIMENSION = 2000


def class_color(class_name: str) -> np.ndarray:
    if class_name == "padding":
        return np.zeros(3)
    names = INSTANCE_CLASSES + STUFF_CLASSES
    index = names.index(class_name) if class_name in names else len(names)
    return np.asarray(colormaps["tab20"](index % 20)[:3])


def _to_pixels(xy: np.ndarray, cell: Cell, resolution: int) -> np.ndarray:
    local = xy if cell.normalized else (xy - cell.origin) / cell.size
    px = np.clip((local * (resolution - 1)).round().astype(int), 0, resolution - 1)
    # image rows grow southward
    px[:, 1] = resolution - 1 - px[:, 1]
    return px


def render_cell(cell: Cell, path: Union[str, Path], resolution: int = 256, point_size: int = 1) -> Path:
    if not 8 <= resolution <= MAX_DIMENSION:
        raise ValueError(f"resolution must be in [8, {MAX_DIMENSION}], got {resolution}")
    image = Image.new("RGB", (2 * resolution + 4, resolution), BACKGROUND)
    draw = ImageDraw.Draw(image)
    for inst in cell.real_instances():
        px = _to_pixels(inst.points[:, :2], cell, resolution)
        semantic = tuple(int(v) for v in (class_color(inst.class_name) * 255).round())
        rgb = (np.clip(inst.points[:, 3:6], 0, 1) * 255).round().astype(int)
        for (x, y), color in zip(px, rgb):
            draw.rectangle([x, y, x + point_size - 1, y + point_size - 1], fill=semantic)
            ox = x + resolution + 4
            draw.rectangle([ox, y, ox + point_size - 1, y + point_size - 1], fill=tuple(int(c) for c in color))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    image.save(path, format="PNG")
    log.info(f"[ RENDER ] Cell {cell.id} of {cell.scene_id}: {path}")
    return path
