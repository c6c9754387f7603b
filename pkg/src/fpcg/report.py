"""Report serialization and figure rendering.

Reports are written as deterministic JSON (sorted keys, no timestamps) so
identical runs produce byte-identical files, plus delimited prediction
tables and PNG figures rendered alongside them.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .audio_io import Waveform
from .evaluate import MetricsReport


def report_json_bytes(report_dict: dict) -> bytes:
    return (json.dumps(report_dict, sort_keys=True, indent=2) + "\n").encode("utf-8")


def write_report_json(report: MetricsReport | dict, path: str | Path) -> None:
    payload = report.to_dict() if isinstance(report, MetricsReport) else report
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(report_json_bytes(payload))


def write_predictions_csv(report: MetricsReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "gender", "predicted"])
        for row in report.predictions:
            writer.writerow([row["subject_id"], row["gender"], row["predicted"]])


def format_report_table(report: MetricsReport) -> str:
    """Fixed-width metrics table for stdout."""

    def cell(v: float | None) -> str:
        return "  n/a" if v is None else f"{v:5.3f}"

    lines = [
        f"protocol: {report.protocol}   n={report.n}   positive={report.positive.value}",
        "  Acc    PR     SN     SP",
        f"  {cell(report.acc)}  {cell(report.pr)}  {cell(report.sn)}  {cell(report.sp)}",
    ]
    if report.undefined:
        lines.append(f"  undefined: {', '.join(report.undefined)}")
    if report.skipped_folds:
        lines.append(f"  skipped folds: {', '.join(report.skipped_folds)}")
    return "\n".join(lines)


def render_metrics_figure(report: MetricsReport, path: str | Path) -> None:
    """Bar chart of the four headline metrics."""
    names = ["Acc", "PR", "SN", "SP"]
    values = [report.acc, report.pr, report.sn, report.sp]
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    xs = np.arange(len(names))
    heights = [0.0 if v is None else v for v in values]
    bars = ax.bar(xs, heights, color="#4878a8")
    for x, v, bar in zip(xs, values, bars):
        label = "n/a" if v is None else f"{v:.2f}"
        ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height() + 0.02,
                label, ha="center", fontsize=9)
    ax.set_xticks(xs, names)
    ax.set_ylim(0, 1.12)
    ax.set_ylabel("score")
    ax.set_title(f"{report.protocol} (n={report.n})")
    fig.tight_layout()
    _save(fig, path)


def render_confusion_figure(report: MetricsReport, path: str | Path) -> None:
    cm = report.confusion
    if cm is None:
        return
    grid = np.array([[cm.tp, cm.fn], [cm.fp, cm.tn]], dtype=float)
    fig, ax = plt.subplots(figsize=(3.6, 3.2))
    ax.imshow(grid, cmap="Blues")
    pos = report.positive.value
    neg = "F" if pos == "M" else "M"
    for (i, j), v in np.ndenumerate(grid):
        ax.text(j, i, f"{int(v)}", ha="center", va="center",
                color="black" if v < grid.max() * 0.6 else "white")
    ax.set_xticks([0, 1], [f"pred {pos}", f"pred {neg}"])
    ax.set_yticks([0, 1], [f"true {pos}", f"true {neg}"])
    ax.set_title("confusion matrix")
    fig.tight_layout()
    _save(fig, path)


def render_fold_accuracy_figure(report: MetricsReport, path: str | Path) -> None:
    if not report.per_fold:
        return
    accs = [f["correct"] / f["n"] for f in report.per_fold if f["n"]]
    labels = [f["subject_id"] for f in report.per_fold if f["n"]]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.3 * len(accs)), 3.0))
    ax.bar(np.arange(len(accs)), accs, color="#6a9e58")
    ax.set_xticks(np.arange(len(accs)), labels, rotation=90, fontsize=6)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("fold accuracy")
    ax.set_title("per-subject folds")
    fig.tight_layout()
    _save(fig, path)


def render_waveform_comparison(before: Waveform, after: Waveform,
                               path: str | Path, title: str = "denoising") -> None:
    t_before = np.arange(len(before)) / before.sample_rate_hz
    t_after = np.arange(len(after)) / after.sample_rate_hz
    fig, axes = plt.subplots(2, 1, figsize=(7, 4), sharex=True)
    axes[0].plot(t_before, before.samples, lw=0.4, color="#777777")
    axes[0].set_ylabel("input")
    axes[1].plot(t_after, after.samples, lw=0.4, color="#4878a8")
    axes[1].set_ylabel("denoised")
    axes[1].set_xlabel("time [s]")
    axes[0].set_title(title)
    fig.tight_layout()
    _save(fig, path)


def render_report_figures(report: MetricsReport, fig_dir: str | Path) -> list[str]:
    """All standard figures for one report; returns the written paths."""
    fig_dir = Path(fig_dir)
    fig_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, renderer in (
        ("metrics.png", render_metrics_figure),
        ("confusion.png", render_confusion_figure),
        ("folds.png", render_fold_accuracy_figure),
    ):
        target = fig_dir / name
        renderer(report, target)
        if target.exists():
            written.append(str(target))
    return written


def _save(fig, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
