"""Report figures: learning curves, benchmark grid and cluster scatter plots."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .clustering import ALGORITHMS  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "svg.hashsalt": "tweetcluster",
    "svg.fonttype": "none",
}


def _save(fig, path: Path, formats=("png", "svg")) -> list[Path]:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    written = []
    for ext in formats:
        out = path.with_suffix("." + ext)
        fig.savefig(out, bbox_inches="tight", metadata={"Date": None} if ext == "svg" else None)
        written.append(out)
    plt.close(fig)
    return written


def plot_learning_curves(curves: Mapping, path, formats=("png", "svg")) -> list[Path]:
    """Training (solid) and validation (dashed) MSE per epoch for each run."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        for i, (name, curve) in enumerate(curves.items()):
            epochs = np.arange(1, curve.epochs + 1)
            color = f"C{i}"
            ax.plot(epochs, curve.train_loss, color=color, label=f"{name} train")
            ax.plot(epochs, curve.val_loss, color=color, ls="--", label=f"{name} validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel("MSE")
        ax.legend(frameon=False)
        return _save(fig, path, formats)


def plot_benchmark(report, path, formats=("png", "svg")) -> list[Path]:
    """Mean CH per representation, one panel per cluster count, bars per algorithm."""
    summ = report.summary()
    reps = report.representations()
    ks = sorted({k for (_, _, k) in summ})
    algs = [a for a in ALGORITHMS if any(a == al for (_, al, _) in summ)]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(ks), figsize=(3.2 * len(ks), 0.35 * len(reps) + 1.5),
                                 sharey=True, squeeze=False)
        y = np.arange(len(reps))
        height = 0.8 / max(len(algs), 1)
        for ax, k in zip(axes[0], ks):
            for j, alg in enumerate(algs):
                means = [summ.get((r, alg, k), (np.nan,) * 3) for r in reps]
                mid = np.array([m[0] for m in means])
                err = np.array([[m[0] - m[1], m[2] - m[0]] for m in means]).T
                ax.barh(y + j * height, mid, height, xerr=err, label=alg, color=f"C{j}")
            ax.set_title(f"{k} clusters")
            ax.set_xscale("log")
            ax.set_xlabel("Calinski-Harabasz")
        axes[0][0].set_yticks(y + height * (len(algs) - 1) / 2, reps)
        axes[0][0].invert_yaxis()
        axes[0][-1].legend(frameon=False, loc="lower right")
        return _save(fig, path, formats)


def plot_clusters(X, labels, path, title: str = "", formats=("svg",)) -> list[Path]:
    """Rows projected on their first two principal axes, coloured by cluster."""
    X = np.asarray(getattr(X, "values", X), dtype=float)
    Xc = X - X.mean(axis=0)
    _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
    proj = Xc @ Vt[:2].T
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 4.0))
        ax.scatter(proj[:, 0], proj[:, 1], c=np.asarray(labels), cmap="tab20", s=4, linewidths=0)
        ax.set_xlabel("PC 1")
        ax.set_ylabel("PC 2")
        if title:
            ax.set_title(title)
        return _save(fig, path, formats)
