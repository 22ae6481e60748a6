# graph_simulations/temporal_communities/logic/plots.py

"""
plots.py

Figures of a training run: loss curves, the clustering lower bound, K per
outer iteration, cluster sizes and a 2-D projection of the embeddings.
Every function writes <out_dir>/<key>.png and returns the path.
"""

from __future__ import annotations

import logging
import os

import matplotlib
# Non-interactive backend; figures are only ever written to disk
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from sklearn.decomposition import PCA

logger = logging.getLogger(__name__)

LOSS_COLUMNS = (
    ("loss", "Total", "k-"),
    ("loss_e", "Topological", "b-"),
    ("loss_t", "Temporal", "g-"),
    ("loss_c", "Cluster", "r-"),
)


def _save(fig, out_dir: str, key: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{key}.png")
    fig.savefig(path, format="png", bbox_inches="tight", dpi=150)
    plt.close(fig)
    return path


def plot_loss_curves(history: list, out_dir: str) -> str:
    epochs = [r["epoch"] for r in history]
    fig, ax = plt.subplots()
    for col, label, style in LOSS_COLUMNS:
        values = np.array([r.get(col, np.nan) for r in history], dtype=float)
        if np.isfinite(values).any():
            ax.plot(epochs, values, style, linewidth=2, label=label)
    ax.set(xlabel="Epoch", ylabel="Mean batch loss", title="Training Loss")
    ax.grid(True)
    ax.legend()
    return _save(fig, out_dir, "loss_curves")


def plot_lower_bound(trace: list, out_dir: str) -> str:
    fig, ax = plt.subplots()
    ax.plot(np.arange(1, len(trace) + 1), trace, "m-", linewidth=2, label="Lower bound")
    ax.set(xlabel="Clustering step", ylabel="Lower bound", title="Clustering Lower Bound")
    ax.grid(True)
    ax.legend()
    return _save(fig, out_dir, "lower_bound")


def plot_k_per_cycle(cycles: list, out_dir: str) -> str:
    """K and, when recorded, validation link-prediction accuracy per outer iteration."""
    x = [c["cycle"] for c in cycles]
    fig, ax = plt.subplots()
    ax.step(x, [c["K"] for c in cycles], "c-", where="mid", linewidth=2, label="K")
    ax.set(xlabel="Outer iteration", ylabel="Clusters K", title="Clusters per Iteration")
    ax.grid(True)
    if any("valid_lp" in c for c in cycles):
        ax2 = ax.twinx()
        ax2.plot(x, [c.get("valid_lp", np.nan) for c in cycles], "o--", color="tab:orange",
                 label="Validation LP_ACC")
        ax2.set_ylabel("LP_ACC")
        ax2.set_ylim(0.0, 1.0)
        ax2.legend(loc="lower right")
    ax.legend(loc="upper left")
    return _save(fig, out_dir, "k_per_cycle")


def plot_cluster_sizes(counts, out_dir: str) -> str:
    counts = np.asarray(counts)
    fig, ax = plt.subplots()
    ax.bar(np.arange(counts.size), counts, color="tab:blue")
    ax.set(xlabel="Cluster", ylabel="Nodes", title=f"Cluster Sizes (K={counts.size})")
    ax.grid(True, axis="y")
    return _save(fig, out_dir, "cluster_sizes")


def plot_embedding_projection(Z: np.ndarray, assignments, out_dir: str, seed: int = 0) -> str:
    """First two principal components of Z, coloured by cluster."""
    if Z.shape[0] < 2 or Z.shape[1] < 2:
        raise ValueError("Projection needs at least 2 rows and 2 columns")
    xy = PCA(n_components=2, random_state=seed).fit_transform(Z)
    fig, ax = plt.subplots(figsize=(6, 6))
    sc = ax.scatter(xy[:, 0], xy[:, 1], c=np.asarray(assignments), cmap="tab20", s=8)
    ax.set(xlabel="PC 1", ylabel="PC 2", title="Embeddings (PCA)")
    fig.colorbar(sc, ax=ax, label="Cluster")
    return _save(fig, out_dir, "embedding_pca")


def save_all_plots(out_dir: str, history: list | None = None, cycles: list | None = None,
                   clusters=None, Z: np.ndarray | None = None, assignments=None,
                   seed: int = 0) -> list:
    """Writes every figure the given data supports; returns the paths."""
    paths = []
    if history:
        paths.append(plot_loss_curves(history, out_dir))
    if cycles:
        paths.append(plot_k_per_cycle(cycles, out_dir))
    if clusters is not None:
        if clusters.trace:
            paths.append(plot_lower_bound(clusters.trace, out_dir))
        paths.append(plot_cluster_sizes(clusters.counts, out_dir))
    if Z is not None and assignments is not None:
        try:
            paths.append(plot_embedding_projection(Z, assignments, out_dir, seed))
        except ValueError as e:
            logger.warning("Embedding projection skipped: %s", e)
    logger.info("Wrote %d plots to %s", len(paths), out_dir)
    return paths
