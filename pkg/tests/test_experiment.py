import hashlib
import json

import pytest
import yaml

from config import experiment
from core.errors import MissingArtifactError
from main import EXIT_CONFIG, EXIT_MISSING, main
from services.artifacts import ArtifactStore
from services.experiment import ExperimentRunner, scene_seed
from services.reporting import read_csv
from services.scene import StreetMap, load_scene, save_scene, scene_rows, write_labeled_cloud


class TestArtifactStore:

    def test_manifest_digests(self, tmp_path):
        store = ArtifactStore(tmp_path / "run")
        output = store.path("models", "weights.bin")
        output.parent.mkdir(parents=True)
        output.write_bytes(b"\x00\x01weights")
        manifest = store.write_manifest(
            "model", "train-coarse", {"seed": 3}, [store.path("missing.txt")], [output], {"train": 1.23456}
        )
        payload = json.loads(manifest.read_text())
        assert payload["command"] == "train-coarse"
        assert payload["config"] == {"seed": 3}
        assert payload["inputs"] == {}
        assert payload["outputs"] == {"models/weights.bin": hashlib.sha256(b"\x00\x01weights").hexdigest()}
        assert payload["timings"] == {"train": 1.235}
        assert "container" in payload["formats"]

    def test_require(self, tmp_path):
        store = ArtifactStore(tmp_path)
        with pytest.raises(MissingArtifactError) as excinfo:
            store.require(store.scene("test-00"), "gen-scene")
        assert excinfo.value.path == str(store.scene("test-00"))

    def test_scene_seeds_are_distinct(self):
        seeds = {scene_seed(s, split, i) for s in range(3) for split in ("train", "val", "test") for i in range(50)}
        assert len(seeds) == 3 * 3 * 50


class TestCommandLine:

    def test_show_config(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert main(["--set", "cells.stride=15", "show-config"]) == 0
        data = yaml.safe_load(capsys.readouterr().out)
        assert data["cells"]["stride"] == 15.0

    def test_missing_artifact(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(["--output", str(tmp_path / "run"), "evaluate"]) == EXIT_MISSING

    @pytest.mark.parametrize("argv", [
        ["--set", "cells.stride=0", "show-config"],
        ["show-config", "--cells.strides=3"],
        ["--set", "seed=abc", "show-config"],
    ])
    def test_config_errors(self, argv, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(argv) == EXIT_CONFIG

    def test_config_file(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        (tmp_path / "exp.yaml").write_text("seed: 7\nquery:\n  num_hints: 4\n")
        assert main(["--config", "exp.yaml", "show-config"]) == 0
        data = yaml.safe_load(capsys.readouterr().out)
        assert (data["seed"], data["query"]["num_hints"]) == (7, 4)

    def test_import_scene(self, scene, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        cloud = write_labeled_cloud(tmp_path / "cloud.tlck", scene_rows(scene), scene.registry, scene.trajectory)
        run = tmp_path / "run"
        assert main(["--output", str(run), "import-scene", "--input", str(cloud), "--split", "test"]) == 0
        imported = load_scene(run / "scenes" / "test-00.tlck")
        assert imported.id == "test-00"
        assert len(imported.instances) == len(scene.instances)
        manifest = json.loads((run / "import_test-00.manifest.json").read_text())
        assert manifest["command"] == "import-scene"
        assert list(manifest["outputs"]) == ["scenes/test-00.tlck"]

        missing = ["--output", str(run), "import-scene", "--input", "nope.tlck", "--split", "train"]
        assert main(missing) == EXIT_MISSING


class TestStreetPartition:

    def test_partition_file_is_shared(self, tmp_path):
        partition = StreetMap.grid((0.0, 0.0, 120.0, 120.0), 2, 2).save(tmp_path / "streets.yaml")
        config = experiment.load(None, ["eval.street_filter=true", f"eval.street_partition={partition}"])
        maps = ExperimentRunner(config, str(tmp_path / "run"), workers=1).street_maps(["test-00", "test-01"])
        assert set(maps) == {"test-00", "test-01"}
        assert maps["test-00"].names() == ["street-0", "street-1", "street-2", "street-3"]
        assert maps["test-00"] is maps["test-01"]

    def test_missing_partition(self, tmp_path):
        config = experiment.load(None, [f"eval.street_partition={tmp_path / 'none.yaml'}"])
        with pytest.raises(MissingArtifactError):
            ExperimentRunner(config, str(tmp_path / "run"), workers=1).street_maps(["test-00"])

    def test_scene_maps_without_partition(self, scene, small_config, tmp_path):
        runner = ExperimentRunner(small_config, str(tmp_path / "run"), workers=1)
        with pytest.raises(MissingArtifactError):
            runner.street_maps(["test-00"])
        save_scene(scene, runner.store.scene("test-00"))
        assert runner.street_maps(["test-00"])["test-00"].names() == scene.streets.names()


@pytest.mark.slow
class TestPipeline:

    def test_end_to_end_is_deterministic(self, small_config, tmp_path):
        first = ExperimentRunner(small_config, str(tmp_path / "a"), workers=1)
        second = ExperimentRunner(small_config, str(tmp_path / "b"), workers=2)
        table = first.pipeline()
        second.pipeline()

        metrics = tmp_path / "a" / "reports" / "metrics.csv"
        assert metrics.read_bytes() == (tmp_path / "b" / "reports" / "metrics.csv").read_bytes()
        rows = read_csv(metrics)
        assert {row["mode"] for row in rows} == set(small_config.eval.modes)
        assert all(0.0 <= row["recall"] <= 1.0 for row in rows)
        assert [r.mode for r in table.reports] == small_config.eval.modes

        for artifact in ("scenes", "queries", "cells", "coarse", "index", "fine", "metrics"):
            assert (tmp_path / "a" / f"{artifact}.manifest.json").exists()

        tables = first.ablate("stride", [15.0], ["coarse-oracle+cell-center"])
        assert [t.name for t in tables] == ["stride-15"]
        assert (tmp_path / "a" / "reports" / "ablate_stride.csv").exists()
