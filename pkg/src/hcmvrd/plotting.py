"""Report figures rendered to PNG files with the Agg backend.

Figures carry no timestamp or software metadata so equal inputs give equal bytes.
"""

from __future__ import annotations

import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import EvalReport  # noqa: E402

_PNG_META = {"Software": None}


def _save(fig, path: str | os.PathLike) -> None:
    fig.savefig(path, format="png", dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_loss_curve(rows: Sequence[tuple[int, int, float]], path: str | os.PathLike) -> None:
    """Per-step loss with per-epoch means overlaid, log scale."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if rows:
        steps = np.array([r[1] for r in rows])
        losses = np.array([r[2] for r in rows])
        ax.plot(steps, losses, lw=0.6, alpha=0.5, label="step")
        epochs = sorted({r[0] for r in rows})
        ends = [max(r[1] for r in rows if r[0] == e) for e in epochs]
        means = [np.mean([r[2] for r in rows if r[0] == e]) for e in epochs]
        ax.plot(ends, means, "o-", ms=3, label="epoch mean")
        if np.all(losses > 0):
            ax.set_yscale("log")
        ax.legend(frameon=False)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    fig.tight_layout()
    _save(fig, path)


def plot_metric_bars(rows: Sequence[tuple[str, EvalReport]], path: str | os.PathLike) -> None:
    """Grouped bars of all six metrics (x100), one group per labelled run."""
    names = [c[0] for c in EvalReport.COLUMNS]
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(rows) + 3), 3.8))
    width = 0.8 / max(len(rows), 1)
    x = np.arange(len(names))
    for i, (label, rep) in enumerate(rows):
        ax.bar(x + (i - (len(rows) - 1) / 2) * width, 100 * np.array(rep.row()), width, label=label)
    ax.set_xticks(x, names)
    ax.set_ylim(0, 105)
    ax.set_ylabel("score (x100)")
    ax.legend(frameon=False, fontsize=7, ncol=2)
    fig.tight_layout()
    _save(fig, path)


def plot_per_video_ap(report: EvalReport, path: str | os.PathLike) -> None:
    """Histogram of per-video AP."""
    aps = [v["ap"] for v in report.per_video.values() if "ap" in v]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.hist(aps, bins=np.linspace(0, 1, 11), edgecolor="black")
    ax.set_xlabel("per-video AP")
    ax.set_ylabel("videos")
    fig.tight_layout()
    _save(fig, path)
