import numpy as np
import pytest

from config.experiment import SceneConfig
from core.errors import SceneError, StreetLookupError
from services.scene import (
    NOISE,
    Provenance,
    Region,
    StreetMap,
    cluster_stuff,
    coverage_report,
    dbscan,
    generate_scene,
    import_labeled_cloud,
    import_point_cloud,
    load_scene,
    save_scene,
    scene_rows,
    write_labeled_cloud,
)
from services.scene.palette import nearest_color


def brute_force_dbscan(points, eps, min_pts):
    """Core components ordered by lowest member; borders join their lowest adjacent cluster"""
    n = len(points)
    within = np.linalg.norm(points[:, None] - points[None], axis=-1) <= eps
    core = within.sum(axis=1) >= min_pts
    component = np.full(n, -1)
    for seed in range(n):
        if not core[seed] or component[seed] >= 0:
            continue
        stack = [seed]
        component[seed] = seed
        while stack:
            p = stack.pop()
            for q in np.flatnonzero(within[p] & core):
                if component[q] < 0:
                    component[q] = seed
                    stack.append(q)
    roots = sorted({int(c) for c in component[core]})
    ids = {root: k for k, root in enumerate(roots)}
    labels = np.full(n, NOISE)
    for i in range(n):
        if core[i]:
            labels[i] = ids[int(component[i])]
        else:
            adjacent = [ids[int(component[j])] for j in np.flatnonzero(within[i] & core)]
            if adjacent:
                labels[i] = min(adjacent)
    return labels


def canonical(labels):
    groups = {}
    for i, label in enumerate(labels):
        if label != NOISE:
            groups.setdefault(label, []).append(i)
    return sorted(tuple(g) for g in groups.values())


class TestDBSCAN:

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for trial in range(100):
            points = rng.uniform(0.0, 10.0, size=(200, 3))
            points[:, 2] *= 0.2
            eps = rng.uniform(0.5, 1.5)
            min_pts = int(rng.integers(1, 8))
            np.testing.assert_array_equal(
                dbscan(points, eps, min_pts), brute_force_dbscan(points, eps, min_pts), err_msg=f"trial {trial}"
            )

    def test_separated_blobs(self):
        rng = np.random.default_rng(1)
        blob = rng.normal(0.0, 0.1, size=(50, 3))
        labels = dbscan(np.vstack([blob, blob + [10.0, 0.0, 0.0]]), eps=1.0, min_pts=4)
        assert set(labels) == {0, 1}
        assert (labels[:50] == 0).all() and (labels[50:] == 1).all()

    def test_chain_is_one_cluster(self):
        chain = np.c_[np.arange(40) * 0.5, np.zeros(40), np.zeros(40)]
        labels = dbscan(chain, eps=1.0, min_pts=3)
        assert (labels == 0).all()

    def test_permutation_invariant_partition(self):
        rng = np.random.default_rng(2)
        points = rng.uniform(0.0, 6.0, size=(150, 3))
        order = rng.permutation(len(points))
        base = dbscan(points, 0.9, 4)
        shuffled = dbscan(points[order], 0.9, 4)
        unshuffled = np.empty_like(shuffled)
        unshuffled[order] = shuffled
        core = np.array([
            (np.linalg.norm(points - p, axis=1) <= 0.9).sum() >= 4 for p in points
        ])
        # border points may switch clusters under reordering; the core partition may not
        assert canonical(np.where(core, base, NOISE)) == canonical(np.where(core, unshuffled, NOISE))

    def test_empty_and_invalid(self):
        assert len(dbscan(np.zeros((0, 3)), 1.0, 3)) == 0
        with pytest.raises(ValueError):
            dbscan(np.zeros((3, 3)), 0.0, 3)
        with pytest.raises(ValueError):
            dbscan(np.zeros((3, 3)), 1.0, 0)


class TestClusterStuff:

    def _strip(self, rng, x0, x1, n):
        xyz = np.c_[rng.uniform(x0, x1, n), rng.uniform(0.0, 2.0, n), rng.uniform(0.0, 1.0, n)]
        return np.hstack([xyz, np.tile([0.15, 0.55, 0.15], (n, 1))])

    def test_gap_splits_instances(self):
        rng = np.random.default_rng(3)
        points = np.vstack([self._strip(rng, 0.0, 10.0, 300), self._strip(rng, 15.0, 25.0, 300)])
        found = cluster_stuff(points, "vegetation", eps=2.0, min_cluster_points=25, id_prefix="s/7")
        assert [inst.id for inst in found] == ["s/7/vegetation/0", "s/7/vegetation/1"]
        assert all(inst.provenance is Provenance.CLUSTERED for inst in found)
        assert sum(len(inst) for inst in found) == 600

    def test_small_clusters_dropped(self):
        rng = np.random.default_rng(4)
        big = self._strip(rng, 0.0, 10.0, 400)
        small = self._strip(rng, 30.0, 31.0, 249)
        found = cluster_stuff(np.vstack([big, small]), "fence", eps=2.0, min_cluster_points=250, id_prefix="s/0")
        assert len(found) == 1
        assert all(len(inst) >= 250 for inst in found)

    def test_no_points(self):
        assert cluster_stuff(np.zeros((0, 6)), "wall", 2.0, 10, "s/0") == []


class TestGenerator:

    def test_deterministic(self, small_config, tmp_path):
        a = generate_scene(small_config.scene, seed=5, scene_id="a")
        b = generate_scene(small_config.scene, seed=5, scene_id="a")
        assert save_scene(a, tmp_path / "a.tlck").read_bytes() == save_scene(b, tmp_path / "b.tlck").read_bytes()
        c = generate_scene(small_config.scene, seed=6, scene_id="a")
        assert save_scene(c, tmp_path / "c.tlck").read_bytes() != (tmp_path / "a.tlck").read_bytes()

    def test_scene_invariants(self, scene):
        assert scene.instances
        for inst in scene.instances:
            assert scene.contains(inst.points[:, :2]).all()
            np.testing.assert_allclose(inst.center, inst.points[:, :3].mean(axis=0), atol=1e-9)
            colors = inst.points[:, 3:]
            assert colors.min() >= 0.0 and colors.max() <= 1.0
        assert scene.contains(scene.trajectory).all()
        for name, points in scene.stuff.items():
            assert scene.registry.is_stuff(name)
            assert scene.contains(points[:, :2]).all()

    def test_trajectory_coverage(self, scene, small_config):
        report = coverage_report(scene, small_config.scene.neighbor_radius)
        assert report["samples"] > 0
        assert report["min_neighbors"] >= small_config.scene.min_neighbors

    def test_rejects_bad_config(self):
        with pytest.raises(SceneError):
            generate_scene(SceneConfig(instance_classes=[]), seed=0)
        with pytest.raises(SceneError):
            generate_scene(SceneConfig(extent=50.0), seed=0, cell_size=30.0)

    def test_palette(self):
        assert nearest_color((0.5, 0.5, 0.5)) == "gray"
        assert nearest_color((0.0, 0.0, 0.0)) == "black"


class TestSceneStorage:

    def test_save_and_load(self, scene, tmp_path):
        loaded = load_scene(save_scene(scene, tmp_path / "scene.tlck"))
        assert loaded.id == scene.id
        assert [i.id for i in loaded.instances] == [i.id for i in scene.instances]
        for a, b in zip(loaded.instances, scene.instances):
            np.testing.assert_array_equal(a.points, b.points)
            assert a.provenance is b.provenance
        assert set(loaded.stuff) == set(scene.stuff)
        assert loaded.streets.names() == scene.streets.names()
        np.testing.assert_array_equal(loaded.trajectory, scene.trajectory)

    def test_import_skips_invalid_rows(self, scene):
        rows = scene_rows(scene)
        stuff_rows = np.flatnonzero(rows[:, 7] < 0)
        bad = stuff_rows[:4]
        rows[bad[0], 0] = np.nan
        rows[bad[1], 3] = 2.0
        rows[bad[2], 6] = 99
        rows[bad[3], 7] = 5
        imported = import_point_cloud(rows, scene.registry, scene.extent, scene.trajectory, "imported")
        assert len(imported.instances) == len(scene.instances)
        assert sum(len(p) for p in imported.stuff.values()) == sum(len(p) for p in scene.stuff.values()) - 4
        for a, b in zip(imported.instances, scene.instances):
            assert a.class_name == b.class_name
            np.testing.assert_allclose(a.center, b.center)

    def test_labeled_cloud_file(self, scene, tmp_path):
        path = write_labeled_cloud(tmp_path / "cloud.tlck", scene_rows(scene), scene.registry, scene.trajectory)
        imported = import_labeled_cloud(path, "cloud")
        assert len(imported.instances) == len(scene.instances)
        assert imported.streets is not None

    def test_import_rejects_empty(self, scene):
        with pytest.raises(SceneError):
            import_point_cloud(np.zeros((0, 8)), scene.registry, None, scene.trajectory, "empty")


class TestStreetMap:

    def test_grid_lookup(self):
        streets = StreetMap.grid((0.0, 0.0, 90.0, 90.0), 3, 3)
        assert streets.street_of((5.0, 5.0)) == "street-0"
        assert streets.street_of((30.0, 5.0)) == "street-1"
        assert streets.street_of((89.0, 89.0)) == "street-8"
        assert streets.street_of((90.0, 90.0)) == "street-8"
        with pytest.raises(StreetLookupError):
            streets.street_of((95.0, 5.0))

    def test_overlap_and_gaps_rejected(self):
        with pytest.raises(StreetLookupError):
            StreetMap([Region("a", (0, 0, 60, 90)), Region("b", (30, 0, 90, 90))], (0, 0, 90, 90))
        with pytest.raises(StreetLookupError):
            StreetMap([Region("a", (0, 0, 30, 90))], (0, 0, 90, 90))

    def test_file_round_trip(self, tmp_path):
        streets = StreetMap.grid((0.0, 0.0, 60.0, 60.0), 2, 1)
        again = StreetMap.from_file(streets.save(tmp_path / "streets.yaml"))
        assert again.to_dict() == streets.to_dict()
