## services/models/augment.py

"""
Training augmentations. Flips act on cell geometry and on the direction words
of the paired description together, so the pair stays consistent.
"""
from dataclasses import replace
from typing import Tuple

import numpy as np

from services.celldb.types import Cell, CellInstance
from services.queries.language import flip_direction, render_hint
from services.queries.types import Hint, QueryDescription


def flip_cell(cell: Cell, axis: int) -> Cell:
    """Mirror real instances of a normalized cell: x -> 1 - x (axis 0) or y -> 1 - y (axis 1)"""
    flipped = []
    for inst in cell.instances:
        if inst.is_padding:
            flipped.append(inst)
            continue
        points = inst.points.copy()
        points[:, axis] = 1.0 - points[:, axis]
        flipped.append(CellInstance(inst.id, inst.class_name, points, inst.provenance))
    return replace(cell, instances=flipped, pad_mask=cell.pad_mask.copy())


def flip_hint(hint: Hint, axis: int) -> Hint:
    direction = flip_direction(hint.direction, axis)
    offset = hint.offset.copy()
    offset[axis] = -offset[axis]
    return Hint(
        text=render_hint(direction, hint.color, hint.class_name),
        target_id=hint.target_id,
        class_name=hint.class_name,
        direction=direction,
        color=hint.color,
        offset=offset,
        provenance=hint.provenance,
    )


def flip_description(description: QueryDescription, axis: int) -> QueryDescription:
    return replace(description, hints=[flip_hint(h, axis) for h in description.hints])


def flip_pair(cell: Cell, description: QueryDescription, axis: int) -> Tuple[Cell, QueryDescription]:
    return flip_cell(cell, axis), flip_description(description, axis)


def rotate_instances(cell: Cell, rng: np.random.Generator) -> Cell:
    """Rotate each real instance about the z axis through its own center"""
    rotated = []
    for inst in cell.instances:
        if inst.is_padding:
            rotated.append(inst)
            continue
        theta = rng.uniform(0.0, 2 * np.pi)
        c, s = np.cos(theta), np.sin(theta)
        points = inst.points.copy()
        center = points[:, :2].mean(axis=0)
        xy = points[:, :2] - center
        points[:, :2] = np.c_[c * xy[:, 0] - s * xy[:, 1], s * xy[:, 0] + c * xy[:, 1]] + center
        rotated.append(CellInstance(inst.id, inst.class_name, points, inst.provenance))
    return replace(cell, instances=rotated, pad_mask=cell.pad_mask.copy())


def shuffle_hints(description: QueryDescription, rng: np.random.Generator) -> QueryDescription:
    order = rng.permutation(len(description.hints))
    return replace(description, hints=[description.hints[i] for i in order])
