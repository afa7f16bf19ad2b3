import numpy as np
import pytest
from PIL import Image

from services.evaluation import MetricsTable, ModeReport
from services.reporting import emit_report, read_csv, render_cell, tables_from_summary, write_csv


def _table(name="test", modes=("full", "coarse-only")):
    ks, epsilons = [1, 5], [5.0, 10.0]
    table = MetricsTable(name, ks, epsilons)
    for m, mode in enumerate(modes):
        grid = {(k, eps): round(0.1 * m + 0.01 * k + eps / 100.0, 4) for k in ks for eps in epsilons}
        table.reports.append(ModeReport(mode, grid, trials=1, queries=20))
    return table


class TestMetricFiles:

    def test_csv_round_trip(self, tmp_path):
        table = _table()
        path = write_csv([table], tmp_path / "metrics.csv")
        assert path.read_text().splitlines()[0] == "mode,k,epsilon,recall"
        rows = read_csv(path)
        assert len(rows) == 2 * 2 * 2
        for row in rows:
            assert row["recall"] == table.report(row["mode"]).recall[(row["k"], row["epsilon"])]

    def test_several_tables_are_labeled(self, tmp_path):
        path = write_csv([_table("stride-10"), _table("stride-20")], tmp_path / "sweep.csv")
        rows = read_csv(path)
        assert {row["table"] for row in rows} == {"stride-10", "stride-20"}

    def test_summary_round_trip(self, tmp_path):
        table = _table()
        emit_report([table], tmp_path)
        again = tables_from_summary(tmp_path / "metrics.json")[0]
        assert again.name == table.name
        for a, b in zip(again.reports, table.reports):
            assert a.mode == b.mode and a.recall == b.recall

    def test_no_plots_unless_asked(self, tmp_path):
        written = emit_report([_table()], tmp_path)
        assert sorted(p.name for p in written) == ["metrics.csv", "metrics.json"]
        assert not list(tmp_path.glob("*.svg"))
        with pytest.raises(ValueError):
            emit_report([], tmp_path)

    def test_plots_are_deterministic(self, tmp_path):
        first = emit_report([_table()], tmp_path / "a", plots=["recall-epsilon"])
        second = emit_report([_table()], tmp_path / "b", plots=["recall-epsilon"])
        svg_a = [p for p in first if p.suffix == ".svg"]
        svg_b = [p for p in second if p.suffix == ".svg"]
        assert len(svg_a) == 1
        assert svg_a[0].read_bytes() == svg_b[0].read_bytes()

    def test_sweep_plot(self, tmp_path):
        tables = [_table("stride-10"), _table("stride-20")]
        written = emit_report(tables, tmp_path, plots=["recall-sweep"], sweep={"label": "stride [m]", "values": [10, 20]})
        assert (tmp_path / "metrics_recall_sweep.svg") in written


class TestRender:

    def test_image_size(self, make_cell, tmp_path):
        cell = make_cell(np.random.default_rng(0))
        path = render_cell(cell, tmp_path / "cell.png", resolution=64)
        with Image.open(path) as image:
            assert image.size == (2 * 64 + 4, 64)
        with pytest.raises(ValueError):
            render_cell(cell, tmp_path / "tiny.png", resolution=4)
