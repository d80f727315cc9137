"""SVG line charts rendered with matplotlib's SVG backend.

Figures are written with a fixed hash salt and no date metadata, so identical
data yields byte-identical files.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np  # noqa: E402

RC = {
    "svg.hashsalt": "hbvsde",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.linewidth": 0.6,
    "lines.linewidth": 1.0,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}
COMPONENTS = ("x", "y", "z")
COLORS = ("#1b6ca8", "#c0392b", "#27ae60", "#7f8c8d")


def _save(fig, path: Path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def _panels(n: int, height: float = 2.0):
    fig, axes = plt.subplots(n, 1, figsize=(6.0, height * n), sharex=True, squeeze=False)
    return fig, axes[:, 0]


def plot_trajectory(path, times, states, title: str = "", labels=COMPONENTS) -> Path:
    states = np.asarray(states)
    with plt.rc_context(RC):
        fig, axes = _panels(states.shape[1])
        for i, ax in enumerate(axes):
            ax.plot(times, states[:, i], color=COLORS[i % len(COLORS)])
            ax.set_ylabel(labels[i])
        axes[-1].set_xlabel("t")
        if title:
            axes[0].set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def plot_compare(path, times, det, mean, lo, hi, title: str = "") -> Path:
    with plt.rc_context(RC):
        fig, axes = _panels(3)
        for i, ax in enumerate(axes):
            ax.fill_between(times, lo[:, i], hi[:, i], color=COLORS[i], alpha=0.2, linewidth=0,
                            label="5-95% band")
            ax.plot(times, mean[:, i], color=COLORS[i], label="stochastic mean")
            ax.plot(times, det[:, i], color="black", linestyle="--", label="deterministic")
            ax.set_ylabel(COMPONENTS[i])
        axes[0].legend(loc="best", fontsize=7)
        axes[-1].set_xlabel("t")
        if title:
            axes[0].set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def plot_lines(path, x, series: dict[str, np.ndarray], xlabel: str, ylabel: str,
               logx: bool = False, logy: bool = False, title: str = "") -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(6.0, 3.5))
        for k, (name, y) in enumerate(series.items()):
            ax.plot(x, y, color=COLORS[k % len(COLORS)], marker="o" if logx else None,
                    markersize=3, label=name)
        if logx:
            ax.set_xscale("log", base=2)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if len(series) > 1:
            ax.legend(loc="best", fontsize=7)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path)
