"""Benchmark figures rendered alongside the delimited reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import Metrics  # noqa: E402


def save_bench_figure(metrics: Metrics, scores: Sequence[float],
                      path: str | Path, mode: str) -> None:
    """Two panels: per-label precision/recall bars and the score histogram."""
    fig, (ax_pr, ax_hist) = plt.subplots(1, 2, figsize=(9.5, 3.8))
    labels = sorted(metrics.per_label)
    xs = range(len(labels))
    width = 0.38
    ax_pr.bar([x - width / 2 for x in xs],
              [metrics.per_label[l]["precision"] for l in labels],
              width=width, label="precision", color="#1f77b4")
    ax_pr.bar([x + width / 2 for x in xs],
              [metrics.per_label[l]["recall"] for l in labels],
              width=width, label="recall", color="#ff7f0e")
    ax_pr.set_xticks(list(xs))
    ax_pr.set_xticklabels(labels)
    ax_pr.set_ylim(0, 1.05)
    ax_pr.set_title(f"per-label ({mode}), exact match "
                    f"{metrics.exact_match:.2f} over {metrics.scenes} scenes")
    ax_pr.legend(loc="lower right", fontsize=8)

    if scores:
        ax_hist.hist(scores, bins=20, range=(0.0, 1.0), color="#2ca02c")
    ax_hist.set_xlim(0, 1)
    ax_hist.set_title("selected instance scores")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # Strip the default Software tag so repeated runs hash identically.
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
