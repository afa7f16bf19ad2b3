## services/celldb/storage.py

import logging
from pathlib import Path
from typing import Union

import numpy as np

from core.container import read_container, write_container
from services.celldb.types import Cell, CellDatabase, CellInstance
from services.scene.types import Provenance

log = logging.getLogger(__name__)

CELLS_KIND = "cells"


def save_cells(db: CellDatabase, path: Union[str, Path]) -> Path:
    records = []
    blocks = []
    for cell in db.cells:
        records.append({
            "id": cell.id,
            "origin": [float(v) for v in cell.origin],
            "street": cell.street,
            "normalized": cell.normalized,
            "instances": [
                {"id": inst.id, "class": inst.class_name, "provenance": inst.provenance.value, "count": len(inst)}
                for inst in cell.instances
            ],
        })
        blocks.extend(inst.points for inst in cell.instances)
    meta = {
        "scene": db.scene_id,
        "size": db.size,
        "stride": db.stride,
        "config": db.config,
        "cells": records,
    }
    points = np.vstack(blocks) if blocks else np.zeros((0, 6))
    return write_container(path, CELLS_KIND, meta, {"points": points})


def load_cells(path: Union[str, Path]) -> CellDatabase:
    meta, arrays = read_container(path, CELLS_KIND)
    points = arrays["points"]
    offset = 0
    cells = []
    for record in meta["cells"]:
        instances = []
        for entry in record["instances"]:
            count = entry["count"]
            instances.append(CellInstance(
                entry["id"], entry["class"], points[offset:offset + count], Provenance(entry["provenance"]),
            ))
            offset += count
        cells.append(Cell(
            id=record["id"],
            scene_id=meta["scene"],
            origin=np.array(record["origin"]),
            size=meta["size"],
            instances=instances,
            street=record["street"],
            normalized=record["normalized"],
        ))
    log.debug(f"[ CELLS ] Loaded {len(cells)} cells from {path}")
    return CellDatabase(meta["scene"], meta["size"], meta["stride"], cells, meta["config"])
