# graph_simulations/temporal_communities/logic/export.py

"""
export.py

Run outputs: embeddings (TSV + compressed npz), cluster assignments and
parameters, metric reports, training history, and the sectioned run summary
printed by the CLI.
"""

from __future__ import annotations

import glob
import json
import logging
import os

import numpy as np
import pandas as pd

from graph_simulations.temporal_communities.data.constants import REPORT_ROWS
from graph_simulations.temporal_communities.errors import DatasetFormatError
from graph_simulations.temporal_communities.logic.clustering import ClusterState
from graph_simulations.temporal_communities.logic.graph import MultimodalGraph

logger = logging.getLogger(__name__)

EMBEDDINGS_TSV = "embeddings.tsv"
EMBEDDINGS_NPZ = "embeddings.npz"
ASSIGNMENTS_TSV = "clusters.tsv"
CLUSTER_PARAMS = "cluster_params.json"
METRICS_TSV = "metrics.tsv"
METRICS_TXT = "metrics.txt"
HISTORY_CSV = "history.csv"
CYCLES_CSV = "cycles.csv"
REPORT_TSV = "report.tsv"

FLOAT_FORMAT = "%.17g"


def _node_columns(g: MultimodalGraph, nodes: np.ndarray) -> dict:
    return {
        "node": nodes,
        "type": [g.node_types[t] for t in g.node_type[nodes]],
        "id": g.local_id(nodes),
    }


def export_embeddings(Z: np.ndarray, g: MultimodalGraph, directory: str, nodes=None) -> list:
    """
    Writes embeddings.tsv (node, type, id, z0 .. z{d-1}) and embeddings.npz.
    Row i of Z belongs to nodes[i] (default: every node in global order).
    """
    nodes = np.arange(g.num_nodes) if nodes is None else np.asarray(nodes, dtype=np.int64)
    if Z.shape[0] != nodes.size:
        raise ValueError(f"{Z.shape[0]} embedding rows for {nodes.size} nodes")
    os.makedirs(directory, exist_ok=True)
    df = pd.DataFrame(_node_columns(g, nodes))
    for j in range(Z.shape[1]):
        df[f"z{j}"] = Z[:, j]
    tsv = os.path.join(directory, EMBEDDINGS_TSV)
    df.to_csv(tsv, sep="\t", index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    npz = os.path.join(directory, EMBEDDINGS_NPZ)
    np.savez_compressed(npz, embeddings=Z, nodes=nodes)
    logger.info("Exported %d x %d embeddings to %s", Z.shape[0], Z.shape[1], directory)
    return [tsv, npz]


def load_embeddings(directory: str) -> tuple:
    """(Z, nodes) from embeddings.npz, falling back to embeddings.tsv."""
    npz = os.path.join(directory, EMBEDDINGS_NPZ)
    if os.path.exists(npz):
        with np.load(npz) as data:
            return data["embeddings"], data["nodes"].astype(np.int64)
    tsv = os.path.join(directory, EMBEDDINGS_TSV)
    if not os.path.exists(tsv):
        raise DatasetFormatError("No embeddings.npz or embeddings.tsv", path=directory)
    df = pd.read_csv(tsv, sep="\t", float_precision="round_trip")
    cols = [c for c in df.columns if c.startswith("z")]
    return df[cols].to_numpy(dtype=float), df["node"].to_numpy(dtype=np.int64)


def export_clusters(state: ClusterState, assignments: np.ndarray, g: MultimodalGraph,
                    directory: str, nodes=None) -> list:
    """clusters.tsv (node, type, id, cluster) plus cluster_params.json; assignments[i] belongs to nodes[i]."""
    os.makedirs(directory, exist_ok=True)
    nodes = np.arange(g.num_nodes) if nodes is None else np.asarray(nodes, dtype=np.int64)
    if assignments.size != nodes.size:
        raise ValueError(f"{assignments.size} assignments for {nodes.size} nodes")
    df = pd.DataFrame(_node_columns(g, nodes))
    df["cluster"] = assignments
    tsv = os.path.join(directory, ASSIGNMENTS_TSV)
    df.to_csv(tsv, sep="\t", index=False, lineterminator="\n")

    params = {
        "K": state.K,
        "phase": state.phase.value,
        "accepted_splits": state.accepted_splits,
        "accepted_merges": state.accepted_merges,
        "weights": state.weights.tolist(),
        "counts": state.counts.tolist(),
        "means": state.means.tolist(),
        "covariances": state.covs.tolist(),
        "lower_bound_trace": list(state.trace),
    }
    path = os.path.join(directory, CLUSTER_PARAMS)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(params, f, indent=2)
        f.write("\n")
    logger.info("Exported %d clusters to %s", state.K, directory)
    return [tsv, path]


def load_assignments(directory: str) -> tuple:
    """(assignments, nodes) from clusters.tsv, ordered by node."""
    path = os.path.join(directory, ASSIGNMENTS_TSV)
    if not os.path.exists(path):
        raise DatasetFormatError("No clusters.tsv", path=directory)
    df = pd.read_csv(path, sep="\t").sort_values("node")
    return df["cluster"].to_numpy(dtype=np.int64), df["node"].to_numpy(dtype=np.int64)


def metrics_frame(rows: dict, run: str = "run") -> pd.DataFrame:
    """One column per run, REPORT_ROWS order first, extra rows after."""
    order = [r for r in REPORT_ROWS if r in rows] + [r for r in rows if r not in REPORT_ROWS]
    return pd.DataFrame({run: [rows[r] for r in order]}, index=pd.Index(order, name="metric"))


def format_table(df: pd.DataFrame) -> str:
    return df.to_string(float_format=lambda v: f"{v:.4f}", na_rep="n/a")


def export_metrics(rows: dict, directory: str, run: str = "run") -> str:
    """metrics.tsv (metric, value) plus the same table as aligned text; returns the text."""
    os.makedirs(directory, exist_ok=True)
    df = metrics_frame(rows, run)
    df.to_csv(os.path.join(directory, METRICS_TSV), sep="\t", float_format=FLOAT_FORMAT,
              na_rep="nan", lineterminator="\n")
    text = format_table(df)
    with open(os.path.join(directory, METRICS_TXT), "w", encoding="utf-8") as f:
        f.write(text + "\n")
    logger.info("Exported metrics to %s", directory)
    return text


def read_metrics(path: str) -> pd.Series:
    df = pd.read_csv(path, sep="\t", index_col="metric")
    if df.shape[1] != 1:
        raise DatasetFormatError("Expected exactly one value column", path=path)
    return df.iloc[:, 0]


def build_report(paths: list, names: list | None = None) -> pd.DataFrame:
    """
    Aggregates metrics.tsv files (or directories holding one) into a single
    table: REPORT_ROWS as rows, one column per run.
    """
    files = []
    for p in paths:
        if os.path.isdir(p):
            files += sorted(glob.glob(os.path.join(p, "**", METRICS_TSV), recursive=True))
        else:
            files.append(p)
    if not files:
        raise DatasetFormatError("No metrics.tsv files found", path=", ".join(paths))
    if names is None:
        names = [os.path.basename(os.path.dirname(os.path.abspath(f))) for f in files]
    if len(names) != len(files):
        raise ValueError(f"{len(names)} run names for {len(files)} metrics files")
    columns = {}
    for name, path in zip(names, files):
        series = read_metrics(path)
        key, i = name, 1
        while key in columns:
            i += 1
            key = f"{name}#{i}"
        columns[key] = series
    df = pd.DataFrame(columns)
    order = [r for r in REPORT_ROWS if r in df.index] + [r for r in df.index if r not in REPORT_ROWS]
    return df.reindex(order).rename_axis("metric")


def export_report(df: pd.DataFrame, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, REPORT_TSV)
    df.to_csv(path, sep="\t", float_format=FLOAT_FORMAT, na_rep="nan", lineterminator="\n")
    logger.info("Exported report of %d runs to %s", df.shape[1], path)
    return path


def export_history(history: list, cycles: list, directory: str) -> list:
    """Per-epoch mean losses and per-cycle clustering rows as CSV."""
    os.makedirs(directory, exist_ok=True)
    written = []
    for rows, name in ((history, HISTORY_CSV), (cycles, CYCLES_CSV)):
        if not rows:
            continue
        path = os.path.join(directory, name)
        pd.DataFrame(rows).to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        written.append(path)
    if written:
        logger.info("Exported training history to %s", directory)
    return written


def get_summary_dict(state=None, cfg=None, metrics: dict | None = None,
                     graph: MultimodalGraph | None = None, clusters: ClusterState | None = None) -> dict:
    """
    Nested dict of summary sections with formatted values. Each section is
    built independently; a failing one is reported as {"ERROR": message}.
    """
    summary = {}
    fmt = lambda v, u="": f"{v:.4f} {u}".strip()

    def safe_section(name, func):
        try:
            summary[name] = func()
        except Exception as e:
            summary[name] = {"ERROR": str(e)}

    if graph is not None:
        safe_section("Graph", lambda: {
            "Nodes": graph.num_nodes,
            "Edges": graph.num_edges,
            "Node types": ", ".join(f"{k}={v}" for k, v in graph.counts().items()),
            "Seen nodes": int(graph.is_seen.sum()),
        })

    if cfg is not None:
        safe_section("Configuration", lambda: {
            "Variant": cfg.variant,
            "Dimension": cfg.dim,
            "Layers / heads": f"{cfg.layers} / {cfg.heads}",
            "Loss weights (E, T, C)": ", ".join(f"{b:g}" for b in cfg.loss_betas),
            "Seed": cfg.seed,
        })

    if state is not None:
        history = state.history
        safe_section("Training", lambda: {
            "Epochs run": state.epoch,
            "Outer iterations": len(state.cycles),
            **({
                "First epoch loss": fmt(history[0]["loss"]),
                "Last epoch loss": fmt(history[-1]["loss"]),
                "Best epoch loss": fmt(np.nanmin([r["loss"] for r in history])),
            } if history else {}),
        })

        safe_section("Validation", lambda: {
            f"Cycle {c['cycle']} LP_ACC": fmt(c["valid_lp"])
            for c in state.cycles if "valid_lp" in c
        })

    cl = clusters if clusters is not None else getattr(state, "clusters", None)
    if cl is not None:
        safe_section("Clustering", lambda: {
            "K": cl.K,
            "Phase": cl.phase.value,
            "Accepted splits": cl.accepted_splits,
            "Accepted merges": cl.accepted_merges,
            "Cluster sizes": ", ".join(str(int(c)) for c in cl.counts),
            **({"Final lower bound": fmt(cl.trace[-1])} if cl.trace else {}),
        })

    if metrics:
        safe_section("Metrics", lambda: {
            k: ("n/a" if v is None or not np.isfinite(v) else fmt(v)) for k, v in metrics.items()
        })

    return summary
