"""Figures written next to the CSV outputs. Uses the Agg backend; nothing is shown."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path) -> Path:
    path = Path(path)
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_error_scatter(errors: dict[int, dict[int, float]], path, title: str | None = None) -> Path:
    """Relative estimation error per sensor, one series per horizon ``T``.

    ``errors[T][sensor]``; infinite horizon uses the key ``0``.
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        cmap = plt.get_cmap("viridis", max(len(errors), 1))
        for i, T in enumerate(sorted(errors)):
            s = sorted(errors[T])
            v = np.maximum([errors[T][j] for j in s], 1e-18)
            ax.scatter(s, v, s=12, color=cmap(i), label="inf" if T == 0 else f"T={T}")
        ax.set_yscale("log")
        ax.set_xlabel("sensor")
        ax.set_ylabel("relative error")
        if len(errors) > 1:
            ax.legend(ncol=2, frameon=False)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def plot_selection_grid(chosen_by_T: dict[int, list[int]], p: int, path) -> Path:
    """Which sensors are chosen at each horizon; rows are horizons."""
    Ts = sorted(chosen_by_T)
    grid = np.zeros((len(Ts), p))
    for i, T in enumerate(Ts):
        grid[i, np.asarray(chosen_by_T[T], dtype=int) - 1] = 1.0
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.12 * p + 1.5), 0.3 * len(Ts) + 1.2))
        ax.imshow(grid, aspect="auto", cmap="Greys", vmin=0, vmax=1, interpolation="nearest",
                  extent=(0.5, p + 0.5, len(Ts) - 0.5, -0.5))
        ax.set_yticks(range(len(Ts)))
        ax.set_yticklabels([str(T) for T in Ts])
        ax.set_xlabel("sensor")
        ax.set_ylabel("T")
        fig.tight_layout()
        return _save(fig, path)


def plot_scores(scores: dict[int, float], chosen, path, ylabel: str = "score") -> Path:
    """Per-sensor scores as bars, chosen sensors highlighted."""
    s = sorted(scores)
    chosen = set(chosen)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.12 * len(s) + 1.5), 3.0))
        ax.bar(s, [scores[j] for j in s],
               color=["tab:red" if j in chosen else "tab:gray" for j in s])
        ax.set_xlabel("sensor")
        ax.set_ylabel(ylabel)
        fig.tight_layout()
        return _save(fig, path)
