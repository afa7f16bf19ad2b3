from services.celldb.grid import assign_in_cell, axis_anchors, cell_anchors, pad_and_normalize, sample_cells
from services.celldb.grounding import GroundedQuery, ground_descriptions, ground_truth_cell, gt_matches
from services.celldb.storage import load_cells, save_cells
from services.celldb.types import Cell, CellDatabase, CellInstance, GroundTruthMatch

__all__ = [
    "Cell",
    "CellDatabase",
    "CellInstance",
    "GroundTruthMatch",
    "GroundedQuery",
    "assign_in_cell",
    "axis_anchors",
    "cell_anchors",
    "ground_descriptions",
    "ground_truth_cell",
    "gt_matches",
    "load_cells",
    "pad_and_normalize",
    "sample_cells",
    "save_cells",
]
