"""Matplotlib figures for the CLI reports.

Figures are built on the Agg canvas directly (no pyplot state) and saved without
timestamps or version metadata, so identical data gives identical PNG bytes.
"""

from __future__ import annotations

import math
from collections import defaultdict

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "lines.linewidth": 1.5,
    "lines.markersize": 4,
}

PALETTE = ["#1b6ca8", "#d1495b", "#edae49", "#00798c", "#66a182", "#8d96a3"]
_PNG_METADATA = {"Software": None}


def _figure(width: float = 4.5, height=None):
    golden = (math.sqrt(5) - 1.0) / 2.0
    fig = Figure(figsize=(width, height or width * golden), dpi=120)
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(1, 1, 1)
    ax.spines["right"].set_visible(False)
    ax.spines["top"].set_visible(False)
    return fig, ax


def _apply_style(ax):
    for item in [ax.title, ax.xaxis.label, ax.yaxis.label]:
        item.set_fontsize(STYLE["axes.labelsize"])
    ax.tick_params(labelsize=STYLE["font.size"] - 1)


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_PNG_METADATA)


def plot_quality_curves(curves: dict, path, title: str = "") -> None:
    """One line per label; x is the kept fraction k/n."""
    fig, ax = _figure()
    for j, (label, curve) in enumerate(curves.items()):
        ax.plot(curve.fractions, curve.values, marker="o", color=PALETTE[j % len(PALETTE)],
                label=f"{label} (AUC {curve.auc():.3f})")
    ax.set_xlabel("fraction of features kept")
    ax.set_ylabel("KL divergence" if next(iter(curves.values())).metric == "kl" else "G(top-k)")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    _apply_style(ax)
    _save(fig, path)


def plot_scores(scores, path, title: str = "attribution scores") -> None:
    scores = np.asarray(scores, dtype=np.float64)
    fig, ax = _figure()
    colors = [PALETTE[0] if s >= 0 else PALETTE[1] for s in scores]
    ax.bar(np.arange(scores.shape[0]), scores, color=colors)
    ax.axhline(0.0, color="black", linewidth=0.6)
    ax.set_xlabel("feature")
    ax.set_ylabel("score")
    ax.set_title(title)
    _apply_style(ax)
    _save(fig, path)


def plot_compression(rows, path, reference=None) -> None:
    """``rows`` are ``(ratio, accuracy, selector, seed)``; the median over seeds is drawn."""
    by_sel = defaultdict(lambda: defaultdict(list))
    for ratio, acc, sel, _seed in rows:
        by_sel[sel][float(ratio)].append(float(acc))
    fig, ax = _figure()
    for j, (sel, pts) in enumerate(by_sel.items()):
        xs = sorted(pts)
        ax.plot(xs, [float(np.median(pts[x])) for x in xs], marker="o",
                color=PALETTE[j % len(PALETTE)], label=sel)
    if reference is not None:
        ax.axhline(reference, color="black", linestyle="--", linewidth=0.8, label="all edges")
    ax.set_xlabel("ratio of selected edges")
    ax.set_ylabel("test accuracy")
    ax.legend(frameon=False)
    _apply_style(ax)
    _save(fig, path)


def plot_selection_losses(rows, path) -> None:
    """``rows`` are ``(k, loss)`` pairs from the pruned-retrain report."""
    fig, ax = _figure()
    ks = [int(r[0]) for r in rows]
    ax.plot(ks, [float(r[1]) for r in rows], marker="o", color=PALETTE[0])
    ax.set_xlabel("selected features k")
    ax.set_ylabel("validation loss")
    _apply_style(ax)
    _save(fig, path)
