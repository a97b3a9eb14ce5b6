"""Matplotlib figures written to SVG files."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# stable ids and no timestamps, so reruns write identical files
matplotlib.rcParams["svg.hashsalt"] = "citysearch"
_META = {"Date": None, "Creator": None}

COLORS = {"informed": "tab:green", "slu": "tab:blue", "keyword": "tab:orange", "uniform": "tab:gray"}


def plot_completion_curves(report, path) -> None:
    depths = sorted({d for _, d in report.conditions})
    fig, axes = plt.subplots(1, len(depths), figsize=(3.6 * len(depths), 3.0), squeeze=False,
                             sharey=True)
    steps = np.arange(1, report.max_steps + 1)
    for ax, depth in zip(axes[0], depths):
        for (baseline, d), c in report.conditions.items():
            if d == depth:
                ax.plot(steps, c.curve, label=baseline, color=COLORS.get(baseline), lw=1.5)
        ax.set_title(f"sensor depth {depth}")
        ax.set_xlabel("max search steps")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel("completed tasks")
    axes[0][-1].legend(loc="upper left", fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def plot_field(field_flat, gmap, path, title=None, target=None, robot=None) -> None:
    grid = np.asarray(field_flat).reshape(gmap.height, gmap.width)
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(grid, origin="lower", cmap="gray_r", interpolation="nearest")
    for lm in gmap.landmarks.values():
        xs, ys = zip(*lm.cells)
        ax.scatter(xs, ys, s=4, marker="s", color="tab:blue" if lm.kind == "street" else "tab:red",
                   alpha=0.25, linewidths=0)
    if target is not None:
        ax.plot(*target, marker="*", color="gold", ms=10, mec="k")
    if robot is not None:
        ax.plot(robot[0], robot[1], marker="o", color="tab:cyan", ms=6, mec="k")
    if title:
        ax.set_title(title, fontsize=8)
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
