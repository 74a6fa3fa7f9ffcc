"""Figure rendering for the report pipeline.

Renders accuracy curves from metrics histories and true-vs-predicted scatter
panels from regression output, always to files (Agg backend, no display).
PNG metadata is pinned so identical inputs give identical bytes.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIG_METADATA = {"Software": "dida"}


def _style(ax, title, xlabel, ylabel):
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)


def accuracy_curves(runs, path, split="test"):
    """One line per run: accuracy over epochs.

    runs: {label: [metric records {epoch, split, accuracy, ...}]}
    """
    fig, ax = plt.subplots(figsize=(6, 4))
    for label in sorted(runs):
        records = [r for r in runs[label] if r["split"] == split]
        records.sort(key=lambda r: r["epoch"])
        ax.plot([r["epoch"] for r in records], [r["accuracy"] for r in records],
                marker="o", markersize=3, label=label)
    _style(ax, f"{split} accuracy", "epoch", "accuracy")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=FIG_METADATA)
    plt.close(fig)
    return path


def scatter_true_pred(groups, path):
    """One panel per extractor: true vs predicted performance.

    groups: {extractor_name: (true array, predicted array)}
    """
    names = sorted(groups)
    fig, axes = plt.subplots(1, len(names), figsize=(4 * len(names), 4), squeeze=False)
    for ax, name in zip(axes[0], names):
        true, pred = groups[name]
        true, pred = np.asarray(true), np.asarray(pred)
        ax.scatter(true, pred, s=12, alpha=0.6)
        lo = min(true.min(), pred.min(), 0.0)
        hi = max(true.max(), pred.max(), 1.0)
        ax.plot([lo, hi], [lo, hi], color="gray", linewidth=1, linestyle="--")
        mse = float(((true - pred) ** 2).mean())
        _style(ax, f"{name} (MSE {mse:.4f})", "true performance", "predicted")
        ax.set_aspect("equal", adjustable="box")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=FIG_METADATA)
    plt.close(fig)
    return path
