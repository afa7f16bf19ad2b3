import numpy as np
import pytest

from core.container import MAGIC, read_container, write_container
from core.errors import MissingArtifactError, ShapeError, TextLocError
from core.nn import ParameterSet


class TestContainer:

    def test_round_trip(self, tmp_path):
        arrays = {
            "points": np.random.default_rng(0).normal(size=(7, 6)),
            "labels": np.arange(7, dtype=np.int64),
            "mask": np.array([True, False, True]),
            "empty": np.zeros((0, 3)),
        }
        meta = {"scene": "test-00", "size": 30.0, "classes": ["pole", "wall"]}
        path = write_container(tmp_path / "sub" / "data.tlck", "scene", meta, arrays)

        loaded_meta, loaded = read_container(path, "scene")
        assert loaded_meta == meta
        assert list(loaded) == list(arrays)
        np.testing.assert_array_equal(loaded["points"], arrays["points"])
        assert loaded["labels"].dtype == np.int64
        np.testing.assert_array_equal(loaded["mask"], [1, 0, 1])
        assert loaded["empty"].shape == (0, 3)

    def test_identical_bytes(self, tmp_path):
        arrays = {"a": np.linspace(0.0, 1.0, 11), "b": np.eye(3)}
        first = write_container(tmp_path / "one.tlck", "index", {"k": 1, "name": "x"}, arrays)
        second = write_container(tmp_path / "two.tlck", "index", {"name": "x", "k": 1}, arrays)
        assert first.read_bytes() == second.read_bytes()
        assert first.read_bytes()[:4] == MAGIC

    def test_wrong_kind(self, tmp_path):
        path = write_container(tmp_path / "c.tlck", "cells", {}, {"a": np.ones(2)})
        with pytest.raises(TextLocError, match="expected a 'scene' container"):
            read_container(path, "scene")

    def test_not_a_container(self, tmp_path):
        path = tmp_path / "junk.tlck"
        path.write_bytes(b"JUNK" + b"\0" * 20)
        with pytest.raises(TextLocError):
            read_container(path, "scene")

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingArtifactError) as excinfo:
            read_container(tmp_path / "absent.tlck", "scene")
        assert "absent.tlck" in excinfo.value.path


class TestParameterSet:

    def test_save_and_load(self, tmp_path):
        params = ParameterSet(seed=4)
        params.add_linear("proj", 3, 5)
        params.add_table("embed", 10, 4)
        path = params.save(tmp_path / "model.tlck", meta={"vocab": 10})

        meta, state = ParameterSet.read(path)
        assert meta == {"vocab": 10}
        fresh = ParameterSet(seed=99)
        fresh.add_linear("proj", 3, 5)
        fresh.add_table("embed", 10, 4)
        fresh.load_state(state)
        for name, tensor in params:
            np.testing.assert_array_equal(fresh[name].data, tensor.data)

    def test_seeded_initialisation(self):
        a, b = ParameterSet(seed=1), ParameterSet(seed=1)
        a.add_mlp("net", [4, 8, 2], zero_last=True)
        b.add_mlp("net", [4, 8, 2], zero_last=True)
        np.testing.assert_array_equal(a["net.0.weight"].data, b["net.0.weight"].data)
        assert not a["net.1.weight"].data.any()

    def test_strict_load_rejects_mismatch(self):
        params = ParameterSet()
        params.add_linear("proj", 3, 5)
        with pytest.raises(ShapeError):
            params.load_state({"proj.weight": np.zeros((3, 5))})
        with pytest.raises(ShapeError):
            params.load_state({"proj.weight": np.zeros((5, 3)), "proj.bias": np.zeros(5)})

    def test_frozen_copy(self):
        params = ParameterSet()
        params.add_linear("proj", 2, 2)
        frozen = params.frozen()
        assert all(not t.requires_grad for t in frozen.tensors())
        frozen["proj.weight"].data[0, 0] = 42.0
        assert params["proj.weight"].data[0, 0] != 42.0
