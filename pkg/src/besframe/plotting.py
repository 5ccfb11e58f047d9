"""Convergence figures for one or more summarised runs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_summaries"]


def plot_summaries(summaries: dict, path, ylabel: str = "metric", log_scale: bool = True) -> Path:
    """Mean +/- one SD against iteration, one line per labelled summary.

    ``summaries`` maps a label to the dict returned by ``runner.summarize``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, s in summaries.items():
        it = np.asarray(s["iteration"])
        mean = np.asarray(s["mean"], dtype=float)
        sd = np.asarray(s["sd"], dtype=float)
        line, = ax.plot(it, mean, label=label, lw=1.5)
        lo = mean - sd
        if log_scale:
            # keep the band on the positive axis
            lo = np.where(lo > 0, lo, mean / 10.0)
        ax.fill_between(it, lo, mean + sd, color=line.get_color(), alpha=0.2, lw=0)
    if log_scale and all(np.all(np.asarray(s["mean"]) > 0) for s in summaries.values()):
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
