"""Figures written next to the run artifacts.

Everything renders through the Agg backend with PNG metadata stripped, so a
figure's bytes depend only on the data drawn.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from .geocell import cell_bounds  # noqa: E402

CLASS_COLORS = {"intersection": "green", "straight": "blue"}

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "svg.hashsalt": "roadtiles",
}


def _save(fig, path):
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


def confusion_figure(cm, path, title="Confusion matrix"):
    counts = np.asarray(cm.counts)
    labels = [c.capitalize() for c in cm.classes]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 3.4))
        im = ax.imshow(counts, cmap="Blues")
        fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
        ax.set_xticks(range(len(labels)), labels)
        ax.set_yticks(range(len(labels)), labels)
        ax.set_xlabel("Predicted")
        ax.set_ylabel("Actual")
        ax.set_title(title)
        hi = counts.max() if counts.size else 0
        for i in range(counts.shape[0]):
            for j in range(counts.shape[1]):
                ax.text(j, i, str(int(counts[i, j])), ha="center", va="center",
                        color="white" if counts[i, j] > hi / 2 else "black")
        fig.tight_layout()
        _save(fig, path)


def map_figure(predictions, path, network=None, title="Classified cells"):
    """Cells drawn as rectangles coloured by predicted class, over the network."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 6.0))
        if network is not None:
            for u, v in network.edges:
                (la0, lo0), (la1, lo1) = network.nodes[u], network.nodes[v]
                ax.plot([lo0, lo1], [la0, la1], color="0.6", lw=0.8, zorder=1)
        for code in sorted(predictions):
            label = predictions[code].label
            lat_min, lat_max, lon_min, lon_max = cell_bounds(code).bbox
            ax.add_patch(Rectangle((lon_min, lat_min), lon_max - lon_min, lat_max - lat_min,
                                   facecolor=CLASS_COLORS[label], edgecolor="none",
                                   alpha=0.55, zorder=2))
        ax.autoscale_view()
        ax.ticklabel_format(useOffset=False)
        ax.set_aspect(1.0 / np.cos(np.radians(np.mean(ax.get_ylim()))))
        ax.set_xlabel("longitude")
        ax.set_ylabel("latitude")
        ax.set_title(title)
        handles = [Rectangle((0, 0), 1, 1, color=c, alpha=0.55) for c in CLASS_COLORS.values()]
        ax.legend(handles, [k for k in CLASS_COLORS], loc="upper right")
        fig.tight_layout()
        _save(fig, path)


def loss_figure(losses, path, title="Training loss"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ax.plot(np.arange(1, len(losses) + 1), losses, marker="o", ms=2, lw=1)
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean cross-entropy")
        ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)
