"""Matplotlib figures written next to the CSV/JSON reports."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .aggregator import SentimentProfile, affine_shift_mean, power_mean  # noqa: E402

__all__ = ["plot_sweep", "plot_affine", "plot_power_mean"]

_RC = {
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.dpi": 120,
}


def _finish(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_sweep(rows, path, group_names=None, weights=None, class_bias=None):
    """Per-group train/test risk and malfare against p (log2 axis)."""
    ps = np.array([r["p"] for r in rows], dtype=float)
    train = np.vstack([r["train_risks"] for r in rows])
    test = np.vstack([r["test_risks"] for r in rows])
    g = train.shape[1]
    names = list(group_names) if group_names else [str(i) for i in range(g)]
    labels = []
    for i, name in enumerate(names):
        extra = []
        if weights is not None:
            extra.append(f"w={weights[i]:.2f}")
        if class_bias is not None:
            extra.append(f"b={class_bias[i]:.2f}")
        labels.append(f"{name} ({', '.join(extra)})" if extra else name)

    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), sharey=True)
        colors = plt.cm.viridis(np.linspace(0, 0.9, g))
        for ax, risks, key, title in ((axes[0], train, "train_malfare", "train"),
                                      (axes[1], test, "test_malfare", "test")):
            for i in range(g):
                ax.plot(ps, risks[:, i], "o-", ms=3, color=colors[i],
                        label=labels[i])
            ax.plot(ps, [r[key] for r in rows], "k--", lw=1.5, label="malfare")
            if (ps > 0).all() and len(ps) > 1:
                ax.set_xscale("log", base=2)
            ax.set_xlabel("p")
            ax.set_title(title)
        axes[0].set_ylabel("risk")
        axes[1].legend(loc="best", frameon=False)
        return _finish(fig, path)


def plot_affine(profile: SentimentProfile, path, p_values=(-2, 0, 2, 4),
                betas=None):
    """M_p(S + beta) - beta against beta, converging to the mean."""
    betas = np.logspace(-2, 3, 60) if betas is None else np.asarray(betas)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.4))
        for p in p_values:
            ax.plot(betas, [affine_shift_mean(profile, p, b) for b in betas],
                    label=f"p={p}")
        ax.axhline(power_mean(profile, 1.0), color="k", ls=":", lw=1,
                   label="M_1")
        ax.set_xscale("log")
        ax.set_xlabel("shift beta")
        ax.set_ylabel("M_p(S + beta) - beta")
        ax.legend(frameon=False)
        return _finish(fig, path)


def plot_power_mean(profile: SentimentProfile, path, p_range=(-8.0, 8.0)):
    ps = np.linspace(*p_range, 161)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.4))
        ax.plot(ps, [power_mean(profile, p) for p in ps])
        for p, style in ((-math.inf, ":"), (math.inf, "--")):
            ax.axhline(power_mean(profile, p), color="grey", ls=style, lw=1)
        ax.set_xlabel("p")
        ax.set_ylabel("M_p(S; w)")
        return _finish(fig, path)
