"""Matplotlib renderers for the report outputs (PNG next to each CSV)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update({
    "figure.figsize": (5.0, 3.6),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
})


def plot_prediction_scatter(y_true: np.ndarray, y_pred: np.ndarray, path: str | Path,
                            title: str = "prediction vs truth") -> None:
    fig, ax = plt.subplots()
    ax.scatter(y_true, y_pred, s=8, alpha=0.5, edgecolors="none")
    lo = min(np.min(y_true), np.min(y_pred))
    hi = max(np.max(y_true), np.max(y_pred))
    ax.plot([lo, hi], [lo, hi], "k--", lw=1)
    ax.set_xlabel("true y")
    ax.set_ylabel("predicted y")
    ax.set_title(title)
    fig.savefig(path)
    plt.close(fig)


def plot_residual_histogram(residuals: np.ndarray, path: str | Path, bins: int = 50) -> None:
    fig, ax = plt.subplots()
    ax.hist(residuals, bins=bins, color="tab:blue", alpha=0.85)
    ax.set_xlabel("prediction - truth")
    ax.set_ylabel("count")
    ax.set_title("residuals")
    fig.savefig(path)
    plt.close(fig)


def plot_elbow(candidate_L, inertias, chosen_L: int, path: str | Path) -> None:
    fig, ax = plt.subplots()
    ax.plot(candidate_L, inertias, "o-", ms=4)
    ax.axvline(chosen_L, color="tab:red", lw=1, ls="--", label=f"chosen L = {chosen_L}")
    ax.set_xlabel("number of clusters L")
    ax.set_ylabel("inertia")
    ax.set_title("elbow curve")
    ax.legend()
    fig.savefig(path)
    plt.close(fig)


def plot_history(history: list[dict], path: str | Path) -> None:
    steps = [h["n_train"] for h in history]
    fig, ax = plt.subplots()
    for key, style in (("l2", "o-"), ("r2", "s--")):
        vals = [h[key] for h in history]
        if any(v is not None for v in vals):
            ax.plot(steps, [np.nan if v is None else v for v in vals], style,
                    ms=4, label=key.upper())
    ax.set_xlabel("training-set size")
    ax.set_ylabel("score")
    ax.set_title("active-learning history")
    ax.legend()
    fig.savefig(path)
    plt.close(fig)
