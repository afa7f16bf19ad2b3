## services/celldb/grounding.py

"""
Ground-truth cell for a position and hint-to-instance matches inside a cell.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from core.errors import GroundingError
from services.celldb.types import Cell, CellDatabase, GroundTruthMatch
from services.queries.language import angle_between
from services.queries.types import QueryDescription
from services.scene.types import Provenance

log = logging.getLogger(__name__)

FORBIDDEN = 1e6


def ground_truth_cell(position, db: CellDatabase) -> int:
    """Containing cell with the closest center; ties go to the lowest id"""
    position = np.asarray(position, dtype=np.float64)[:2]
    ids = db.containing(position)
    if len(ids) == 0:
        raise GroundingError(f"{db.scene_id}: no cell contains ({position[0]:.2f}, {position[1]:.2f})")
    centers = np.array([db.cell(int(i)).center for i in ids])
    dists = np.linalg.norm(centers - position, axis=1)
    order = np.lexsort((ids, dists))
    return int(ids[order[0]])


def match_costs(description: QueryDescription, cell: Cell, direction_threshold: float = 45.0) -> np.ndarray:
    """
    (N_h, N) cost of pairing each hint with each cell instance, FORBIDDEN for
    pairs that may not match. Labeled hints pair only with the instance of
    the same id at cost 0; clustered hints pair with clustered instances of
    the same class whose direction from the position is within the threshold
    of the hint target's, at the 2D distance between the two centers.
    """
    position = description.position
    centers = cell.world_centers()
    costs = np.full((len(description.hints), len(cell.instances)), FORBIDDEN)
    for h, hint in enumerate(description.hints):
        target = hint.target_center(position)
        for i, inst in enumerate(cell.instances):
            if inst.is_padding:
                continue
            if hint.provenance is Provenance.LABELED:
                if inst.provenance is Provenance.LABELED and inst.id == hint.target_id:
                    costs[h, i] = 0.0
            elif inst.provenance is Provenance.CLUSTERED and inst.class_name == hint.class_name:
                angle = angle_between(target - position, centers[i] - position)
                if angle < direction_threshold:
                    costs[h, i] = float(np.linalg.norm(centers[i] - target))
    return costs


def gt_matches(description: QueryDescription, cell: Cell, direction_threshold: float = 45.0) -> GroundTruthMatch:
    """Minimum-cost injective hint-to-instance matching under the pairing rules"""
    costs = match_costs(description, cell, direction_threshold)
    assignment = np.full(len(description.hints), -1, dtype=np.int64)
    translation = np.zeros((len(description.hints), 2))
    if costs.size:
        rows, cols = linear_sum_assignment(costs)
        centers = cell.world_centers()
        for h, i in zip(rows, cols):
            if costs[h, i] < FORBIDDEN:
                assignment[h] = i
                translation[h] = (description.position - centers[i]) / cell.size
    return GroundTruthMatch(cell_id=cell.id, assignment=assignment, translation=translation)


@dataclass
class GroundedQuery:
    description: QueryDescription
    cell_id: int
    matches: GroundTruthMatch


def ground_descriptions(
    descriptions: Sequence[QueryDescription],
    databases: Dict[str, CellDatabase],
    direction_threshold: float = 45.0,
    require_match: bool = True,
) -> Tuple[List[GroundedQuery], Dict[str, int]]:
    """
    Ground every description; those without a containing cell, or (when
    require_match) without any matched hint, are excluded and counted.
    """
    grounded: List[GroundedQuery] = []
    excluded = {"no_cell": 0, "no_match": 0}
    for description in descriptions:
        db = databases[description.scene_id]
        try:
            cell_id = ground_truth_cell(description.position, db)
        except GroundingError:
            excluded["no_cell"] += 1
            continue
        matches = gt_matches(description, db.cell(cell_id), direction_threshold)
        if require_match and matches.num_matched == 0:
            excluded["no_match"] += 1
            continue
        grounded.append(GroundedQuery(description, cell_id, matches))
    if any(excluded.values()):
        log.warning(
            f"[ CELLS ] Excluded {excluded['no_cell']} descriptions without a containing cell "
            f"and {excluded['no_match']} without a matched hint"
        )
    return grounded, excluded
