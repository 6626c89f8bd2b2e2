"""Figure rendering for the CLI report paths.

Every report that writes delimited data can also render a matplotlib
figure next to it; these helpers keep the styling in one place and always
write to files (Agg backend, no display).
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 150


def plot_activation_curve(rows: np.ndarray, label: str, path) -> Path:
    """Value and slope of one activation over the sampled range."""
    fig, (ax_f, ax_d) = plt.subplots(1, 2, figsize=(9, 3.6))
    ax_f.plot(rows[:, 0], rows[:, 1], color="tab:blue")
    ax_f.axhline(0.0, color="gray", lw=0.6)
    ax_f.axvline(0.0, color="gray", lw=0.6)
    ax_f.set_xlabel("x")
    ax_f.set_ylabel("f(x)")
    ax_f.set_title(label)
    ax_d.plot(rows[:, 0], rows[:, 2], color="tab:red")
    ax_d.set_xlabel("x")
    ax_d.set_ylabel("f'(x)")
    ax_d.set_title(f"{label} slope")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)


def plot_training_curves(runs, path, title: str = "") -> Path:
    """Per-seed train loss and test error against the epoch index."""
    fig, (ax_l, ax_e) = plt.subplots(1, 2, figsize=(9, 3.6))
    for rm in runs:
        epochs = [em.epoch for em in rm.epochs]
        ax_l.plot(epochs, [em.train_loss for em in rm.epochs], label=f"seed {rm.seed}")
        ax_e.plot(epochs, [em.test_error_pct for em in rm.epochs], label=f"seed {rm.seed}")
    ax_l.set_xlabel("epoch")
    ax_l.set_ylabel("train loss")
    ax_e.set_xlabel("epoch")
    ax_e.set_ylabel("test error (%)")
    if title:
        ax_l.set_title(title)
    if runs:
        ax_e.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)


def plot_trough_sum(ts, path) -> Path:
    """The equal-minima sum on [-1, 1] with its minima and band markers."""
    xs = np.linspace(-1.0, 1.0, 4000)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, ts.value(xs), color="tab:blue", lw=1.2)
    mins = np.array(ts.minima)
    ax.plot(mins[:, 0], mins[:, 1], "v", color="tab:red", ms=5, label="matched minima")
    lo, hi = ts.default_band()
    ax.axhline(lo, color="tab:green", lw=0.8, ls="--")
    ax.axhline(hi, color="tab:green", lw=0.8, ls="--", label="identified band")
    ax.set_xlabel("x")
    ax.set_ylabel("sum value")
    ax.set_title(f"{2 * ts.k} equalized troughs (n = {ts.n:g})")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)


def plot_line_response(ts_values: Sequence[float], ys: Sequence[float],
                       breakpoints: Sequence[float], path,
                       title: str = "network response along a line") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ts_values, ys, color="tab:blue", lw=1.0)
    for bp in breakpoints:
        ax.axvline(bp, color="tab:orange", lw=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("logit 0")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)


def plot_alpha_sweep(report: dict, path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for label in report["alphas"]:
        col = report["test_error_pct"][label]
        ax.plot(range(1, len(col) + 1), col, label=f"alpha = {label}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("test error (%)")
    ax.set_title("elu scale sweep")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return Path(path)
