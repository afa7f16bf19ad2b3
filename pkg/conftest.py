from itertools import combinations

import numpy as np
import pytest

from config import experiment
from config.experiment import CellGridConfig, EncoderConfig, FineConfig
from services.celldb import (
    Cell,
    CellDatabase,
    CellInstance,
    GroundedQuery,
    GroundTruthMatch,
    ground_descriptions,
    sample_cells,
)
from services.models import build_vocabulary
from services.queries import (
    DIRECTIONS,
    Hint,
    QueryDescription,
    StuffClustering,
    direction_word,
    generate_dataset,
    render_hint,
)
from services.scene import Provenance, generate_scene
from services.scene.palette import PALETTE, palette_names

SMALL = {
    "seed": 3,
    "scene": {"extent": 120.0, "road_margin": 30.0, "road_spacing": 60.0},
    "data": {"train_scenes": 1, "val_scenes": 0, "test_scenes": 1},
    "query": {"spacing": 15.0, "positions_per_location": 2},
    "encoder": {"embed_dim": 16, "point_hidden": 8, "token_dim": 8, "points_per_instance": 8},
    "pretrain": {"epochs": 1},
    "coarse": {"batch_size": 8, "epochs": 2},
    "fine": {"batch_size": 8, "epochs": 1, "heads": 2, "blocks": 1, "sinkhorn_iters": 20},
    "eval": {"random_trials": 3, "plots": False},
}


@pytest.fixture(scope="session")
def small_config():
    return experiment.from_dict(SMALL)


@pytest.fixture(scope="session")
def clustering(small_config):
    return StuffClustering.from_config(small_config)


@pytest.fixture(scope="session")
def scene(small_config):
    return generate_scene(small_config.scene, seed=11, cell_size=small_config.cells.size, scene_id="test-00")


@pytest.fixture(scope="session")
def cell_db(scene, small_config, clustering):
    return sample_cells(scene, small_config.cells, clustering, seed=11)


@pytest.fixture(scope="session")
def descriptions(scene, small_config, clustering):
    found, _ = generate_dataset(scene, small_config.query, seed=12, clustering=clustering)
    return found


@pytest.fixture(scope="session")
def grounded(descriptions, cell_db, small_config):
    queries, _ = ground_descriptions(
        descriptions, {cell_db.scene_id: cell_db}, small_config.cells.direction_threshold, require_match=True
    )
    assert queries, "fixture scene produced no grounded queries"
    return queries


@pytest.fixture(scope="session")
def vocab(small_config):
    return build_vocabulary(small_config.scene.instance_classes + small_config.scene.stuff_classes)


@pytest.fixture
def tiny_encoder():
    return EncoderConfig(embed_dim=8, point_hidden=8, token_dim=4, points_per_instance=6)


@pytest.fixture
def tiny_fine():
    return FineConfig(heads=2, blocks=1, sinkhorn_iters=30, sinkhorn_tol=0.0)


@pytest.fixture
def make_cell():
    """Normalized cell with `real` random instances and `pad` dummies"""

    def build(rng, real=4, pad=2, cell_id=0, scene_id="synthetic", points=12, size=30.0):
        instances = []
        classes = ["pole", "building", "trash bin", "vegetation", "garage", "traffic sign"]
        for i in range(real):
            center = rng.uniform(0.1, 0.9, size=3) * np.array([1.0, 1.0, 0.1])
            xyz = center + rng.normal(0.0, 0.03, size=(points, 3))
            rgb = rng.uniform(0.0, 1.0, size=(points, 3))
            instances.append(CellInstance(f"obj-{i:05d}", classes[i % len(classes)], np.hstack([xyz, rgb])))
        config = CellGridConfig()
        for k in range(pad):
            xyz = rng.uniform(0.0, config.pad_extent, size=(config.pad_points, 3))
            instances.append(CellInstance(
                f"pad-{k}", "padding", np.hstack([xyz, np.zeros((config.pad_points, 3))]), Provenance.PADDING
            ))
        origin = rng.uniform(0.0, 100.0, size=2).round()
        return Cell(cell_id, scene_id, origin, size, instances, normalized=True)

    return build


@pytest.fixture
def make_description():
    """Description with `hints` random hints at a random position"""

    def build(rng, hints=3, scene_id="synthetic", description_id="q-0"):
        colors = palette_names()
        items = []
        for j in range(hints):
            direction = DIRECTIONS[int(rng.integers(len(DIRECTIONS)))]
            color = colors[int(rng.integers(len(colors)))]
            class_name = ["pole", "building", "trash bin", "vegetation"][j % 4]
            items.append(Hint(
                text=render_hint(direction, color, class_name),
                target_id=f"obj-{j:05d}",
                class_name=class_name,
                direction=direction,
                color=color,
                offset=rng.normal(size=2),
            ))
        return QueryDescription(description_id, scene_id, rng.uniform(0.0, 100.0, size=2), items, "closest")

    return build


# one distinct palette color per kind, so every cell's kinds are visible in its colors
KINDS = [
    ("building", "red"),
    ("pole", "black"),
    ("trash bin", "green"),
    ("traffic sign", "blue"),
    ("vegetation", "yellow"),
    ("garage", "white"),
    ("fence", "brown"),
    ("wall", "orange"),
]


@pytest.fixture(scope="session")
def make_distinct_set():
    """
    `count` non-overlapping cells of three instances whose (class, color)
    sets are pairwise distinct, each with one description grounded on it.
    Returns (databases, grounded queries).
    """

    def build(count, seed=0, size=30.0, points=16):
        rng = np.random.default_rng(seed)
        sets = list(combinations(range(len(KINDS)), 3))
        picks = rng.permutation(len(sets))[:count]
        if len(picks) < count:
            raise ValueError(f"at most {len(sets)} distinct cells")
        cells, queries = [], []
        for cell_id, pick in enumerate(picks):
            origin = np.array([size * (cell_id % 8), size * (cell_id // 8)])
            centers = np.c_[rng.uniform(0.15, 0.85, size=(3, 2)), np.full(3, 0.05)]
            instances = []
            for i, kind in enumerate(sets[pick]):
                class_name, color = KINDS[kind]
                xyz = centers[i] + rng.normal(0.0, 0.02, size=(points, 3))
                rgb = np.clip(np.array(PALETTE[color]) + rng.normal(0.0, 0.02, size=(points, 3)), 0.0, 1.0)
                instances.append(CellInstance(f"obj-{cell_id}-{i}", class_name, np.hstack([xyz, rgb])))
            cell = Cell(cell_id, "distinct", origin, size, instances, normalized=True)
            cells.append(cell)

            position = origin + size * rng.uniform(0.2, 0.8, size=2)
            world = cell.world_centers()
            order = rng.permutation(3)
            hints = []
            for i in order:
                class_name, color = KINDS[sets[pick][i]]
                offset = position - world[i]
                direction = direction_word(offset)
                hints.append(Hint(
                    text=render_hint(direction, color, class_name),
                    target_id=instances[i].id,
                    class_name=class_name,
                    direction=direction,
                    color=color,
                    offset=offset,
                ))
            description = QueryDescription(f"distinct-{cell_id}", "distinct", position, hints, "closest")
            matches = GroundTruthMatch(cell_id, order.astype(np.int64), (position - world[order]) / size)
            queries.append(GroundedQuery(description, cell_id, matches))
        db = CellDatabase("distinct", size, size, cells)
        return {db.scene_id: db}, queries

    return build
