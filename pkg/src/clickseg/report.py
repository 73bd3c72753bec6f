"""Benchmark report rendering: markdown and CSV tables plus summary figures.

Rows are (model, inference mode) pairs with NoC columns per dataset, the
layout used by published interactive-segmentation comparisons. A fixture
file of published reference numbers for large-backbone models ships with the
package; when supplied, reference values appear beside the measured ones.
"""

from __future__ import annotations

import csv
import importlib.resources
import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bench import DatasetReport

REFERENCE_FIXTURE = "reference_noc.json"


@dataclass(frozen=True, eq=False)
class RunRecord:
    """One benchmark run: which model, which inference mode, which dataset."""

    model: str
    mode: str
    dataset: str
    report: DatasetReport


def load_reference_fixtures(path=None) -> dict:
    """Map (model, mode, dataset) -> {threshold: reference mean NoC}."""
    if path is None:
        text = (
            importlib.resources.files("clickseg.data")
            .joinpath(REFERENCE_FIXTURE)
            .read_text()
        )
    else:
        text = Path(path).read_text()
    payload = json.loads(text)
    out = {}
    for entry in payload["entries"]:
        key = (entry["model"], entry["mode"], entry["dataset"])
        out[key] = {
            0.90: entry.get("noc90"),
            0.95: entry.get("noc95"),
        }
    return out


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float) and x != x:  # NaN
        return "nan"
    return f"{x:.2f}"


def _cell(run: RunRecord, th: float, fixtures) -> str:
    measured = run.report.mean_noc.get(th)
    text = _fmt(measured)
    if fixtures:
        ref = fixtures.get((run.model, run.mode, run.dataset), {}).get(th)
        if ref is not None:
            text += f" (ref {_fmt(ref)})"
    return text


def render_markdown(runs: list[RunRecord], fixtures: dict | None = None) -> str:
    """One row per (model, mode); NoC@threshold columns grouped per dataset."""
    datasets = sorted({r.dataset for r in runs})
    thresholds = sorted({th for r in runs for th in r.report.thresholds})
    header = ["model", "mode"]
    for ds in datasets:
        header += [f"{ds} NoC@{int(round(th * 100))}" for th in thresholds]
    header.append("failures")

    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join(["---"] * len(header)) + "|",
    ]
    by_row: dict[tuple[str, str], dict[str, RunRecord]] = {}
    for run in runs:
        by_row.setdefault((run.model, run.mode), {})[run.dataset] = run
    for (model, mode), row_runs in by_row.items():
        cells = [model, mode]
        failures = 0
        for ds in datasets:
            run = row_runs.get(ds)
            for th in thresholds:
                cells.append(_cell(run, th, fixtures) if run else "-")
            if run:
                failures += run.report.failures
        cells.append(str(failures))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def write_csv(runs: list[RunRecord], path, fixtures: dict | None = None) -> None:
    """Long-format rows; the same numbers the markdown table shows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["model", "mode", "dataset", "threshold", "mean_noc",
             "reference_noc", "reached_fraction", "failures", "instances"]
        )
        for run in runs:
            for th in run.report.thresholds:
                ref = None
                if fixtures:
                    ref = fixtures.get((run.model, run.mode, run.dataset), {}).get(th)
                writer.writerow(
                    [
                        run.model,
                        run.mode,
                        run.dataset,
                        f"{th:.2f}",
                        f"{run.report.mean_noc[th]:.6f}",
                        "" if ref is None else f"{ref:.2f}",
                        f"{run.report.reached_fraction[th]:.4f}",
                        run.report.failures,
                        len(run.report.instances),
                    ]
                )


def _mean_iou_curve(report: DatasetReport) -> np.ndarray:
    """Mean IoU after k clicks; traces that stopped early hold their last value."""
    traces = [r.iou_trace for r in report.instances if not r.failed and r.iou_trace]
    if not traces:
        return np.zeros(0)
    grid = np.zeros((len(traces), report.max_clicks))
    for i, tr in enumerate(traces):
        tr = list(tr) + [tr[-1]] * (report.max_clicks - len(tr))
        grid[i] = tr
    return grid.mean(axis=0)


def render_figures(runs: list[RunRecord], out_dir) -> list[Path]:
    """Write the IoU-vs-clicks curves and the NoC histogram next to the tables."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for run in runs:
        curve = _mean_iou_curve(run.report)
        if curve.size == 0:
            continue
        ax.plot(
            np.arange(1, curve.size + 1),
            curve,
            marker="o",
            markersize=3,
            label=f"{run.model}/{run.mode}/{run.dataset}",
        )
    ax.set_xlabel("clicks")
    ax.set_ylabel("mean IoU")
    ax.set_ylim(0.0, 1.0)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = out_dir / "iou_vs_clicks.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    for run in runs:
        for th in run.report.thresholds:
            values = [r.noc[th] for r in run.report.instances if not r.failed]
            if not values:
                continue
            ax.hist(
                values,
                bins=np.arange(0.5, run.report.max_clicks + 1.5),
                alpha=0.5,
                label=f"{run.model}/{run.mode}/{run.dataset} @{int(round(th*100))}",
            )
    ax.set_xlabel("clicks to reach target IoU")
    ax.set_ylabel("instances")
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = out_dir / "noc_histogram.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
