## services/queries/generator.py

import logging
from typing import List, Tuple

import numpy as np

from config.experiment import QueryConfig
from core.errors import StreetLookupError
from services.queries.language import direction_word, render_hint
from services.queries.sampling import StuffClustering, sample_positions, select_instances
from services.queries.types import DatasetStats, Hint, QueryDescription
from services.scene.palette import nearest_color
from services.scene.types import Instance, Scene

log = logging.getLogger(__name__)


def describe(position: np.ndarray, instance: Instance) -> Hint:
    offset = np.asarray(position, dtype=np.float64)[:2] - instance.center[:2]
    direction = direction_word(offset)
    color = nearest_color(instance.mean_color)
    return Hint(
        text=render_hint(direction, color, instance.class_name),
        target_id=instance.id,
        class_name=instance.class_name,
        direction=direction,
        color=color,
        offset=offset,
        provenance=instance.provenance,
    )


def generate_dataset(
    scene: Scene,
    config: QueryConfig,
    seed: int,
    clustering: StuffClustering = StuffClustering(),
    workers: int = 1,
) -> Tuple[List[QueryDescription], DatasetStats]:
    """
    Descriptions for every kept position: one per strategy, with strategies
    yielding the same target set collapsed into the first one.
    """
    positions = sample_positions(scene, config, seed, clustering, workers)
    descriptions: List[QueryDescription] = []
    for position in positions:
        street = ""
        if scene.streets is not None:
            try:
                street = scene.streets.street_of(position.xy)
            except StreetLookupError:
                street = ""
        seen = set()
        for strategy in config.strategies:
            targets = select_instances(position.xy, position.candidates, strategy, config.num_hints)
            key = frozenset(inst.id for inst in targets)
            if key in seen:
                continue
            seen.add(key)
            descriptions.append(QueryDescription(
                id=f"{position.id}/{strategy}",
                scene_id=scene.id,
                position=position.xy,
                hints=[describe(position.xy, inst) for inst in targets],
                strategy=strategy,
                street=street,
            ))

    stats = DatasetStats(
        scene_id=scene.id,
        positions=len(positions),
        descriptions=len(descriptions),
        unique_descriptions=len({d.key() for d in descriptions}),
        area_m2=scene.width * scene.height,
    )
    log.info(
        f"[ QUERIES ] {scene.id}: {stats.descriptions} descriptions for {stats.positions} positions, "
        f"unique ratio {stats.unique_ratio:.3f}"
    )
    return descriptions, stats
