## services/reporting/report.py

"""
Metric tables on disk: CSV rows (mode, k, epsilon, recall), a JSON summary
and optional SVG plots. Output is byte-stable for identical tables.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from services.evaluation.pipeline import MetricsTable, ModeReport  # noqa: E402

log = logging.getLogger(__name__)

CSV_HEADER = ["mode", "k", "epsilon", "recall"]
PLOT_KINDS = ("recall-epsilon", "recall-sweep")

plt.rcParams["svg.hashsalt"] = "textloc"
plt.rcParams["svg.fonttype"] = "none"


def _fmt(value: float) -> str:
    return repr(float(value))


def write_csv(tables: Sequence[MetricsTable], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER if len(tables) == 1 else ["table"] + CSV_HEADER)
        for table in tables:
            for row in table.rows():
                values = [row["mode"], row["k"], _fmt(row["epsilon"]), _fmt(row["recall"])]
                writer.writerow(values if len(tables) == 1 else [table.name] + values)
    return path


def read_csv(path: Union[str, Path]) -> List[dict]:
    with open(path, newline="") as f:
        rows = []
        for row in csv.DictReader(f):
            row["k"] = int(row["k"])
            row["epsilon"] = float(row["epsilon"])
            row["recall"] = float(row["recall"])
            rows.append(row)
    return rows


def write_summary(tables: Sequence[MetricsTable], path: Union[str, Path], extra: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"tables": [t.summary() for t in tables]}
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_recall_epsilon(table: MetricsTable, path: Union[str, Path]) -> Path:
    """Recall over epsilon, one line per (mode, k)"""
    fig, ax = plt.subplots(figsize=(6, 4))
    for report in table.reports:
        for k in table.ks:
            ax.plot(table.epsilons, [report.recall[(k, eps)] for eps in table.epsilons], marker="o", label=f"{report.mode} k={k}")
    ax.set_xlabel("epsilon [m]")
    ax.set_ylabel("localization recall")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(table.name)
    ax.legend(fontsize="small")
    return _save(fig, Path(path))


def plot_sweep(tables: Sequence[MetricsTable], values: Sequence[float], label: str, path: Union[str, Path], mode: Optional[str] = None) -> Path:
    """Recall over a swept parameter, one line per (k, epsilon) of the given mode"""
    fig, ax = plt.subplots(figsize=(6, 4))
    reports: List[ModeReport] = [t.report(mode) if mode else t.reports[0] for t in tables]
    first = tables[0]
    for k in first.ks:
        for eps in first.epsilons:
            ax.plot(values, [r.recall[(k, eps)] for r in reports], marker="o", label=f"k={k} <{eps:g}m")
    ax.set_xlabel(label)
    ax.set_ylabel("localization recall")
    ax.set_ylim(0.0, 1.05)
    ax.legend(fontsize="small")
    return _save(fig, Path(path))


def emit_report(
    tables: Sequence[MetricsTable],
    out_dir: Union[str, Path],
    stem: str = "metrics",
    plots: Sequence[str] = (),
    sweep: Optional[Dict] = None,
) -> List[Path]:
    """
    Write <stem>.csv and <stem>.json, plus the requested SVG plots. `sweep`
    carries {"label", "values"} for the recall-sweep plot.
    """
    if not tables:
        raise ValueError("no metric tables to report")
    out_dir = Path(out_dir)
    written = [write_csv(tables, out_dir / f"{stem}.csv"), write_summary(tables, out_dir / f"{stem}.json", {"sweep": sweep} if sweep else None)]
    for kind in plots:
        if kind == "recall-epsilon":
            for table in tables:
                name = stem if len(tables) == 1 else f"{stem}_{table.name}"
                written.append(plot_recall_epsilon(table, out_dir / f"{name}_recall_epsilon.svg"))
        elif kind == "recall-sweep" and sweep:
            written.append(plot_sweep(tables, sweep["values"], sweep["label"], out_dir / f"{stem}_recall_sweep.svg"))
        else:
            log.warning(f"[ REPORT ] Skipping plot '{kind}'")
    log.info(f"[ REPORT ] Wrote {len(written)} files to {out_dir}")
    return written


def tables_from_summary(path: Union[str, Path]) -> List[MetricsTable]:
    """Rebuild metric tables from a JSON summary (for the plot command)"""
    data = json.loads(Path(path).read_text())
    tables = []
    for entry in data["tables"]:
        table = MetricsTable(entry["name"], entry["k"], entry["epsilon"])
        for mode in entry["modes"]:
            grid = {(r["k"], float(r["epsilon"])): r["recall"] for r in mode["recall"]}
            table.reports.append(ModeReport(
                mode["mode"], grid, mode["matching_precision"], mode["matching_recall"], mode["trials"], mode["queries"]
            ))
        tables.append(table)
    return tables


def sweep_from_summary(path: Union[str, Path]) -> Optional[dict]:
    return json.loads(Path(path).read_text()).get("sweep")
