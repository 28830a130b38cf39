"""Render run metrics and fat-tail summaries to figure files.

Figures are produced from the delimited outputs of a run directory, so any
run (or pair of runs) can be re-plotted without recomputing. The Agg backend
is forced: rendering targets files, never a display.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import read_metrics  # noqa: E402

__all__ = ["render_run"]


def _metric_figure(runs: dict, column: str, cumulative: str, ylabel: str, path: Path):
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, records in runs.items():
        x = [r["batch_index"] for r in records]
        ax.plot(x, [r[column] for r in records], marker="o", alpha=0.5,
                label=f"{label} (per batch)")
        ax.plot(x, [r[cumulative] for r in records], linestyle="--",
                label=f"{label} (cumulative)")
    ax.set_xlabel("mini-batch")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _location_figure(runs: dict, path: Path):
    fig, ax = plt.subplots(figsize=(7, 4))
    first = True
    for label, records in runs.items():
        x = [r["batch_index"] for r in records]
        if first:
            ax.plot(x, [r["actual_mean"] for r in records], color="black",
                    linewidth=2, label="actual batch mean")
            first = False
        ax.plot(x, [r["pred_location"] for r in records], marker="o",
                label=f"{label} predicted location")
    ax.set_xlabel("mini-batch")
    ax.set_ylabel("target (unscaled)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _fat_tail_figure(csv_path: Path, out_path: Path):
    rows = []
    for line in csv_path.read_text().splitlines():
        if line.startswith("#") or line.startswith("code,"):
            continue
        code, category, mean, sd, q05, q50, q95 = line.split(",")
        rows.append((category, float(mean), float(q05), float(q95)))
    if not rows:
        return
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = range(len(rows))
    means = [r[1] for r in rows]
    lo = [max(r[1] - r[2], 0.0) for r in rows]
    hi = [max(r[3] - r[1], 0.0) for r in rows]
    ax.errorbar(xs, means, yerr=[lo, hi], fmt="o", capsize=3)
    ax.set_xticks(list(xs))
    ax.set_xticklabels([r[0] for r in rows], rotation=30, ha="right", fontsize=8)
    ax.set_yscale("log")
    ax.set_ylabel("posterior degrees of freedom")
    ax.axhline(1.0, color="grey", linestyle=":", linewidth=1)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def render_run(run_dir, out_dir=None, compare_dir=None, labels=("run", "baseline")) -> list[Path]:
    """Write metric/location/fat-tail figures for one run (optionally overlaid
    with a second). Returns the list of files written."""
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir is not None else run_dir
    out.mkdir(parents=True, exist_ok=True)

    runs = {labels[0]: read_metrics(run_dir / "metrics.csv")}
    if compare_dir is not None:
        runs[labels[1]] = read_metrics(Path(compare_dir) / "metrics.csv")

    written = []
    for column, cumulative, ylabel, name in (
        ("lppd", "lppd_cum", "log pointwise predictive density", "lppd.png"),
        ("mae", "mae_cum", "MAE (unscaled)", "mae.png"),
        ("rmse", "rmse_cum", "RMSE (unscaled)", "rmse.png"),
    ):
        path = out / name
        _metric_figure(runs, column, cumulative, ylabel, path)
        written.append(path)

    path = out / "location_fit.png"
    _location_figure(runs, path)
    written.append(path)

    fat_csv = run_dir / "fat_tails.csv"
    if fat_csv.exists():
        path = out / "fat_tails.png"
        _fat_tail_figure(fat_csv, path)
        written.append(path)
    return written
