import itertools

import numpy as np
import pytest

from config.experiment import CellGridConfig
from core.errors import GroundingError, InsufficientInstancesError, SceneError
from services.celldb import (
    Cell,
    CellDatabase,
    CellInstance,
    assign_in_cell,
    axis_anchors,
    cell_anchors,
    ground_truth_cell,
    gt_matches,
    load_cells,
    pad_and_normalize,
    save_cells,
)
from services.celldb.grounding import FORBIDDEN, match_costs
from services.queries import Hint, QueryDescription, render_hint
from services.scene import Instance, Provenance


def _blob(rng, center, n=3, spread=0.2):
    xyz = np.array([center[0], center[1], 1.0]) + rng.normal(0.0, spread, size=(n, 3))
    xyz[:, :2] -= xyz[:, :2].mean(axis=0) - np.asarray(center[:2])
    return np.hstack([xyz, np.full((n, 3), 0.5)])


def _grid_db(extent=90.0, size=30.0, stride=10.0):
    anchors = cell_anchors((0.0, 0.0, extent, extent), size, stride)
    cells = [Cell(i, "grid", origin, size, []) for i, origin in enumerate(anchors)]
    return CellDatabase("grid", size, stride, cells)


def _hint(target_id, class_name, position, target_xy, provenance):
    return Hint(
        text=render_hint("north", "green", class_name),
        target_id=target_id,
        class_name=class_name,
        direction="north",
        color="green",
        offset=np.asarray(position) - np.asarray(target_xy),
        provenance=provenance,
    )


class TestAnchors:

    def test_counts(self):
        assert len(axis_anchors(0.0, 90.0, 30.0, 10.0)) == 7
        assert len(cell_anchors((0.0, 0.0, 90.0, 90.0), 30.0, 10.0)) == 49
        assert len(cell_anchors((0.0, 0.0, 90.0, 90.0), 30.0, 30.0)) == 9

    def test_flush_final_anchor(self):
        np.testing.assert_allclose(axis_anchors(0.0, 95.0, 30.0, 10.0), [0, 10, 20, 30, 40, 50, 60, 65])

    def test_extent_too_small(self):
        with pytest.raises(SceneError):
            axis_anchors(0.0, 20.0, 30.0, 10.0)

    @pytest.mark.parametrize("extent, stride", [(90.0, 10.0), (95.0, 10.0), (120.0, 30.0), (101.0, 17.0)])
    def test_grid_coverage(self, extent, stride):
        anchors = cell_anchors((0.0, 0.0, extent, extent), 30.0, stride)
        points = np.random.default_rng(0).uniform(0.0, extent, size=(500, 2))
        points = np.vstack([points, [[0.0, 0.0], [extent, extent], [extent, 0.0]]])
        inside = (
            (points[:, None, :] >= anchors[None] - 1e-9) & (points[:, None, :] <= anchors[None] + 30.0 + 1e-9)
        ).all(axis=2)
        assert inside.any(axis=1).all()


class TestAssignment:

    def _instance(self, inside, total):
        rng = np.random.default_rng(total)
        xy = np.vstack([rng.uniform(1.0, 29.0, (inside, 2)), rng.uniform(40.0, 60.0, (total - inside, 2))])
        return Instance("obj-00000", "building", np.hstack([xy, np.zeros((total, 1)), np.full((total, 3), 0.5)]))

    def test_rules(self):
        config = CellGridConfig(min_overlap_points=250)
        origin = (0.0, 0.0)
        assert assign_in_cell(self._instance(300, 900), origin, config)
        assert assign_in_cell(self._instance(250, 10_000), origin, config)
        assert not assign_in_cell(self._instance(33, 100), origin, config)
        assert not assign_in_cell(self._instance(0, 100), origin, config)


class TestPadAndNormalize:

    def _raw(self, rng, count, size=30.0):
        instances = [
            CellInstance(f"obj-{i:05d}", "pole", _blob(rng, rng.uniform(5.0, 25.0, 2) + 100.0, n=5 + i))
            for i in range(count)
        ]
        return Cell(3, "s", np.array([100.0, 100.0]), size, instances)

    def test_pads_with_dummies(self):
        config = CellGridConfig()
        cell = pad_and_normalize(self._raw(np.random.default_rng(0), 3), config)
        assert len(cell.instances) == config.max_instances
        assert cell.num_real == 3
        assert cell.pad_mask.tolist() == [False] * 3 + [True] * 13
        for inst in cell.instances[3:]:
            assert len(inst) == config.pad_points
            assert not inst.points[:, 3:].any()
            assert inst.points[:, :3].min() >= 0.0 and inst.points[:, :3].max() <= config.pad_extent

    def test_cut_off_keeps_largest(self):
        config = CellGridConfig()
        raw = self._raw(np.random.default_rng(1), 20)
        cell = pad_and_normalize(raw, config)
        assert cell.num_real == 16
        assert [inst.id for inst in cell.instances] == [f"obj-{i:05d}" for i in range(4, 20)]

    def test_normalization_and_idempotence(self):
        rng = np.random.default_rng(2)
        raw = self._raw(rng, 2)
        corner = np.array([[130.0, 130.0, 0.0, 0.2, 0.2, 0.2], [100.0, 100.0, 0.0, 0.2, 0.2, 0.2]])
        raw.instances.append(CellInstance("obj-corner", "pole", corner))
        cell = pad_and_normalize(raw, CellGridConfig())
        np.testing.assert_allclose(cell.instances[2].points[:, :2], [[1.0, 1.0], [0.0, 0.0]])
        np.testing.assert_allclose(cell.world_centers()[2], [115.0, 115.0])
        assert pad_and_normalize(cell, CellGridConfig()) is cell

    def test_no_real_instances(self):
        with pytest.raises(InsufficientInstancesError):
            pad_and_normalize(Cell(0, "s", np.zeros(2), 30.0, []), CellGridConfig())


class TestSampleCells:

    def test_database_invariants(self, cell_db, scene, small_config):
        config = small_config.cells
        assert len(cell_db) > 0
        assert cell_db.ids().tolist() == list(range(len(cell_db)))
        anchors = {tuple(a) for a in cell_anchors(scene.extent, config.size, config.stride)}
        origins = [tuple(cell.origin) for cell in cell_db]
        assert len(set(origins)) == len(origins)
        assert set(origins) <= anchors
        for cell in cell_db:
            assert cell.normalized
            assert len(cell.instances) == config.max_instances
            assert config.min_instances <= cell.num_real <= config.max_instances
            np.testing.assert_allclose(cell.center, cell.origin + config.size / 2)
            for inst in cell.real_instances():
                assert inst.points[:, :2].min() >= -1e-9 and inst.points[:, :2].max() <= 1.0 + 1e-9
            assert cell.street == scene.streets.street_of(cell.center)

    def test_clustered_ids_are_cell_scoped(self, cell_db):
        clustered = [
            (cell.id, inst.id) for cell in cell_db for inst in cell.instances
            if inst.provenance is Provenance.CLUSTERED
        ]
        for cell_id, instance_id in clustered:
            assert instance_id.startswith(f"{cell_db.scene_id}/cell-{cell_id}/")

    def test_storage_round_trip(self, cell_db, tmp_path):
        loaded = load_cells(save_cells(cell_db, tmp_path / "cells.tlck"))
        assert len(loaded) == len(cell_db)
        assert loaded.config == cell_db.config
        for a, b in zip(loaded, cell_db):
            assert a.id == b.id and a.street == b.street and a.normalized
            np.testing.assert_array_equal(a.pad_mask, b.pad_mask)
            for x, y in zip(a.instances, b.instances):
                assert (x.id, x.class_name, x.provenance) == (y.id, y.class_name, y.provenance)
                np.testing.assert_array_equal(x.points, y.points)


class TestGroundTruthCell:

    def test_matches_brute_force(self, cell_db, scene):
        rng = np.random.default_rng(5)
        for position in rng.uniform(0.0, scene.width, size=(300, 2)):
            best = None
            for cell in cell_db:
                if cell.contains(position):
                    key = (np.linalg.norm(cell.center - position), cell.id)
                    best = key if best is None or key < best else best
            if best is None:
                with pytest.raises(GroundingError):
                    ground_truth_cell(position, cell_db)
            else:
                assert ground_truth_cell(position, cell_db) == best[1]

    def test_cell_center(self, cell_db):
        for cell in cell_db:
            assert ground_truth_cell(cell.center, cell_db) == cell.id

    def test_tie_goes_to_lowest_id(self):
        cells = [Cell(1, "t", np.array([0.0, 0.0]), 30.0, []), Cell(0, "t", np.array([10.0, 0.0]), 30.0, [])]
        db = CellDatabase("t", 30.0, 10.0, cells)
        assert ground_truth_cell((20.0, 15.0), db) == 0

    def test_interior_positions_near_center(self):
        db = _grid_db()
        bound = np.sqrt(2.0) / 2.0 * 10.0 + 1e-9
        for position in np.random.default_rng(6).uniform(15.0, 75.0, size=(500, 2)):
            cell = db.cell(ground_truth_cell(position, db))
            assert np.linalg.norm(cell.center - position) <= bound


class TestGroundTruthMatches:

    def _clustered_cell(self, rng, count=5):
        instances = [
            CellInstance(f"s/cell-0/vegetation/{i}", "vegetation", _blob(rng, rng.uniform(1.0, 29.0, 2)), Provenance.CLUSTERED)
            for i in range(count)
        ]
        instances.append(CellInstance("obj-00007", "pole", _blob(rng, (15.0, 15.0))))
        return Cell(0, "s", np.zeros(2), 30.0, instances)

    def test_labeled_by_id(self):
        rng = np.random.default_rng(0)
        cell = self._clustered_cell(rng)
        position = np.array([10.0, 10.0])
        hints = [_hint("obj-00007", "pole", position, (15.0, 15.0), Provenance.LABELED)]
        hints.append(_hint("obj-99999", "pole", position, (15.0, 15.0), Provenance.LABELED))
        match = gt_matches(QueryDescription("q", "s", position, hints, "closest"), cell)
        assert match.assignment.tolist() == [5, -1]
        np.testing.assert_allclose(match.translation[0], (position - cell.world_centers()[5]) / 30.0)
        np.testing.assert_array_equal(match.translation[1], [0.0, 0.0])

    def test_direction_disagreement_unmatched(self):
        instances = [CellInstance("s/cell-0/wall/0", "wall", _blob(np.random.default_rng(1), (25.0, 15.0)), Provenance.CLUSTERED)]
        cell = Cell(0, "s", np.zeros(2), 30.0, instances)
        position = np.array([15.0, 15.0])
        # target described on the opposite side of the position
        opposite = position + 10.0 * np.array([np.cos(np.radians(190.0)), np.sin(np.radians(190.0))])
        hints = [_hint("q/wall/0", "wall", position, opposite, Provenance.CLUSTERED)]
        match = gt_matches(QueryDescription("q", "s", position, hints, "closest"), cell)
        assert match.num_matched == 0
        near = position + np.array([9.0, 1.0])
        hints = [_hint("q/wall/0", "wall", position, near, Provenance.CLUSTERED)]
        assert gt_matches(QueryDescription("q", "s", position, hints, "closest"), cell).num_matched == 1

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(2)
        for trial in range(40):
            cell = self._clustered_cell(rng, count=int(rng.integers(2, 6)))
            position = rng.uniform(5.0, 25.0, 2)
            hints = [
                _hint(f"q/vegetation/{j}", "vegetation", position, rng.uniform(0.0, 30.0, 2), Provenance.CLUSTERED)
                for j in range(int(rng.integers(1, 5)))
            ]
            description = QueryDescription(f"q-{trial}", "s", position, hints, "closest")
            costs = match_costs(description, cell)
            match = gt_matches(description, cell)

            best = (0, 0.0)
            options = [-1] + list(range(len(cell.instances)))
            for choice in itertools.product(options, repeat=len(hints)):
                used = [i for i in choice if i >= 0]
                if len(used) != len(set(used)) or any(costs[h, i] >= FORBIDDEN for h, i in enumerate(choice) if i >= 0):
                    continue
                key = (len(used), -sum(costs[h, i] for h, i in enumerate(choice) if i >= 0))
                best = max(best, key)

            pairs = match.pairs()
            assert len({i for _, i in pairs}) == len(pairs)
            assert len(pairs) == best[0]
            assert sum(costs[h, i] for h, i in pairs) == pytest.approx(-best[1])

    def test_hint_order_symmetry(self):
        rng = np.random.default_rng(3)
        cell = self._clustered_cell(rng)
        position = np.array([14.0, 16.0])
        hints = [
            _hint(f"q/vegetation/{j}", "vegetation", position, rng.uniform(0.0, 30.0, 2), Provenance.CLUSTERED)
            for j in range(4)
        ]
        order = [2, 0, 3, 1]
        base = gt_matches(QueryDescription("q", "s", position, hints, "closest"), cell)
        permuted = gt_matches(QueryDescription("q", "s", position, [hints[j] for j in order], "closest"), cell)
        np.testing.assert_array_equal(permuted.assignment, base.assignment[order])

    def test_grounded_fixture(self, grounded, cell_db):
        for query in grounded:
            cell = cell_db.cell(query.cell_id)
            assert cell.contains(query.description.position)
            assert query.matches.num_matched >= 1
            assert query.matches.cell_id == query.cell_id
