"""Figures written to files: convergence traces, speedups and overlaps."""
from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import SpeedupRow, TraceRecord  # noqa: E402

_FLOOR = 1e-16  # log axes cannot show exact zeros


def plot_traces(curves: dict[str, Sequence[TraceRecord]], path, axis: str = "epoch",
                title: str | None = None) -> None:
    """Suboptimality against passes over the data (``epoch``) or seconds (``time``)."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for name, trace in curves.items():
        if axis == "time":
            xs = [r.wall_ns / 1e9 for r in trace]
        else:
            xs = [r.epoch for r in trace]
        ys = np.maximum([r.subopt for r in trace], _FLOOR)
        ax.semilogy(xs, ys, label=name)
    ax.set_xlabel("time (s)" if axis == "time" else "epochs")
    ax.set_ylabel("suboptimality")
    if title:
        ax.set_title(title)
    ax.grid(True, which="major", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_speedup(rows: Sequence[SpeedupRow], path, title: str | None = None) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    ps = [r.p for r in rows]
    ax.plot(ps, ps, "k--", lw=1, label="ideal")
    ax.plot(ps, [r.time_speedup for r in rows], "o-", label="time")
    ax.plot(ps, [r.iteration_speedup for r in rows], "s-", label="theoretical (iterations)")
    ax.set_xlabel("workers")
    ax.set_ylabel("speedup")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_overlap(ps: Sequence[int], max_overlap: Sequence[float], mean_overlap: Sequence[float],
                 path) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(ps, max_overlap, "o-", label="max window overlap")
    ax.plot(ps, mean_overlap, "s-", label="mean window overlap")
    ax.set_xlabel("workers")
    ax.set_ylabel("overlap (lower bound)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
