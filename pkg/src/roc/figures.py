"""Figure rendering for the report paths: mechanism comparison bars and PIT
histograms, written as PNG files next to the CSV output."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .calibration import PIT_BINS, KeyStats

COMPARISON_METRICS = (
    "mission_success_rate",
    "deadline_violation_rate",
    "safety_violation_rate",
    "mean_risk_adjusted_utility",
    "mean_reassignment_latency",
    "message_bytes",
    "mean_brier",
    "mean_crps",
)


def render_comparison_figures(
    aggregate_rows: Sequence[Mapping],
    out_dir: Path,
    metrics: Sequence[str] = COMPARISON_METRICS,
) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    labels = [row["config"] for row in aggregate_rows]
    for metric in metrics:
        means = [row.get(f"{metric}_mean") for row in aggregate_rows]
        errs = [row.get(f"{metric}_stderr") or 0.0 for row in aggregate_rows]
        if all(m is None for m in means):
            continue
        xs = range(len(labels))
        fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(labels)), 3.2))
        ax.bar(
            xs,
            [m if m is not None else 0.0 for m in means],
            yerr=errs,
            capsize=3,
            color="#4878a8",
        )
        ax.set_xticks(list(xs))
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel(metric)
        ax.set_title(metric.replace("_", " "))
        fig.tight_layout()
        path = out_dir / f"compare_{metric}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def render_pit_figures(
    stats_by_key: Mapping[tuple[str, str], KeyStats], out_dir: Path
) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    edges = [i / PIT_BINS for i in range(PIT_BINS)]
    for (agent_id, option_id), stats in sorted(stats_by_key.items()):
        if sum(stats.pit_histogram) == 0:
            continue
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        ax.bar(edges, stats.pit_fractions(), width=1.0 / PIT_BINS, align="edge", color="#a85848")
        ax.axhline(1.0 / PIT_BINS, color="black", linewidth=0.8, linestyle="--")
        ax.set_xlabel("PIT")
        ax.set_ylabel("fraction")
        ax.set_title(f"{agent_id} / {option_id} (n={stats.count})", fontsize=9)
        fig.tight_layout()
        path = out_dir / f"pit_{agent_id}_{option_id}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
