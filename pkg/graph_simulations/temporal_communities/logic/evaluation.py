# graph_simulations/temporal_communities/logic/evaluation.py

"""
evaluation.py

Metric suite for embeddings and communities:

- split_edges       : train/valid/test edge split with non-edge negatives
- temporal_labels   : equal-frequency snapshot labels from first timestamps
- lp_accuracy       : link prediction probe on inner-product scores
- cf_accuracy       : node classification probe
- nmi, modularity   : partition quality
- louvain_labels    : link-based reference communities
- evaluate_run      : all report rows for one run
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import networkx as nx
import numpy as np
import pandas as pd
import scipy.sparse as sp
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import accuracy_score, normalized_mutual_info_score
from sklearn.model_selection import train_test_split
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from graph_simulations.temporal_communities.data.constants import (
    CF_EPOCHS, CF_TEST_FRACTION, EDGE_SPLIT_RATIOS, PROBE_REPEATS, TEMPORAL_LABEL_BINS,
)
from graph_simulations.temporal_communities.errors import EvaluationError
from graph_simulations.temporal_communities.logic.graph import MultimodalGraph

logger = logging.getLogger(__name__)

SPLIT_PARTS = ("train", "valid", "test")


class LabelKind(Enum):
    GROUND_TRUTH = "L_y"
    TEMPORAL = "L_T"
    LINK = "L_G"


@dataclass(frozen=True)
class LabelSet:
    nodes: np.ndarray               # global ids, ascending
    labels: np.ndarray              # codes into vocabulary
    vocabulary: tuple
    kind: LabelKind

    def __len__(self) -> int:
        return int(self.nodes.size)

    @classmethod
    def from_pairs(cls, nodes, raw_labels, kind: LabelKind) -> "LabelSet":
        nodes = np.asarray(nodes, dtype=np.int64)
        raw = np.asarray([str(x) for x in raw_labels], dtype=object)
        if nodes.size != raw.size:
            raise ValueError(f"{nodes.size} nodes for {raw.size} labels")
        if np.unique(nodes).size != nodes.size:
            raise ValueError("A node carries more than one label")
        order = np.argsort(nodes, kind="stable")
        vocab, codes = np.unique(raw[order], return_inverse=True) if raw.size else (np.zeros(0), np.zeros(0))
        return cls(nodes[order], np.asarray(codes, dtype=np.int64), tuple(str(v) for v in vocab), kind)

    def restrict(self, nodes) -> "LabelSet":
        keep = np.isin(self.nodes, np.asarray(nodes, dtype=np.int64))
        return LabelSet(self.nodes[keep], self.labels[keep], self.vocabulary, self.kind)

    def names(self) -> np.ndarray:
        return np.asarray(self.vocabulary, dtype=object)[self.labels]


# -----------------------------
# Edge split
# -----------------------------
@dataclass(frozen=True)
class EdgeSplit:
    train: np.ndarray               # (n, 2) global ids
    valid: np.ndarray
    test: np.ndarray
    train_neg: np.ndarray
    valid_neg: np.ndarray
    test_neg: np.ndarray

    def pairs(self, part: str) -> tuple:
        if part not in SPLIT_PARTS:
            raise ValueError(f"Unknown split part '{part}'")
        return getattr(self, part), getattr(self, f"{part}_neg")

    def heldout_nodes(self) -> np.ndarray:
        """Endpoints of validation and test edges."""
        return np.unique(np.concatenate([self.valid.ravel(), self.test.ravel()]))


def _sample_non_edges(g: MultimodalGraph, count: int, rng: np.random.Generator) -> np.ndarray:
    n = g.num_nodes
    out = np.zeros((0, 2), dtype=np.int64)
    if count == 0:
        return out
    adj = g.adjacency
    for _ in range(100):
        need = count - out.shape[0]
        cand = rng.integers(0, n, size=(max(2 * need, 16), 2))
        cand = cand[cand[:, 0] != cand[:, 1]]
        if cand.size:
            linked = np.asarray(adj[cand[:, 0], cand[:, 1]]).ravel() != 0
            out = np.vstack([out, cand[~linked][:need]])
        if out.shape[0] >= count:
            return out
    raise EvaluationError(f"Could not find {count} non-edges; the graph is too dense")


def split_edges(g: MultimodalGraph, ratios=EDGE_SPLIT_RATIOS, seed: int = 0) -> EdgeSplit:
    """
    Uniform disjoint split of the linked node pairs (relations and
    directions merged, so parallel edges never straddle two parts).
    Validation and test sizes are floored, the remainder goes to train.
    Every part gets as many negatives as positives, drawn uniformly from
    pairs that are not edges of g.
    """
    ratios = np.asarray(ratios, dtype=float)
    if ratios.shape != (3,) or (ratios < 0).any() or not np.isclose(ratios.sum(), 1.0):
        raise ValueError(f"Split ratios must be three non-negative numbers summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    edges = g.node_pairs()
    m = edges.shape[0]
    perm = rng.permutation(m)
    n_valid = int(np.floor(ratios[1] * m + 1e-9))
    n_test = int(np.floor(ratios[2] * m + 1e-9))
    valid = edges[perm[:n_valid]]
    test = edges[perm[n_valid:n_valid + n_test]]
    train = edges[perm[n_valid + n_test:]]
    return EdgeSplit(
        train=train, valid=valid, test=test,
        train_neg=_sample_non_edges(g, train.shape[0], rng),
        valid_neg=_sample_non_edges(g, valid.shape[0], rng),
        test_neg=_sample_non_edges(g, test.shape[0], rng),
    )


# -----------------------------
# Labels
# -----------------------------
def temporal_labels(g: MultimodalGraph, bins: int = TEMPORAL_LABEL_BINS) -> LabelSet:
    """
    Timestamped nodes ranked by range start and cut into `bins` equal-frequency
    labels; nodes sharing a start time all take the earliest label among them.
    """
    if bins < 2:
        raise ValueError(f"temporal_labels needs bins >= 2, got {bins}")
    nodes = np.flatnonzero(g.has_time)
    if nodes.size == 0:
        return LabelSet(nodes, nodes.copy(), (), LabelKind.TEMPORAL)
    df = pd.DataFrame({"node": nodes, "start": g.t_start[nodes]})
    df = df.sort_values(["start", "node"], kind="mergesort").reset_index(drop=True)
    df["label"] = (np.arange(len(df)) * bins) // len(df)
    df["label"] = df.groupby("start")["label"].transform("min")
    df = df.sort_values("node")
    return LabelSet(
        df["node"].to_numpy(np.int64), df["label"].to_numpy(np.int64),
        tuple(str(b) for b in range(bins)), LabelKind.TEMPORAL,
    )


def louvain_labels(g: MultimodalGraph, seed: int = 0) -> LabelSet:
    """Louvain communities of the homogenized graph, multi-edges as weights."""
    a = sp.triu(g.undirected_multigraph(), k=0).tocoo()
    graph = nx.Graph()
    graph.add_nodes_from(range(g.num_nodes))
    for u, v, w in zip(a.row, a.col, a.data):
        graph.add_edge(int(u), int(v), weight=float(w / 2.0 if u == v else w))
    communities = nx.community.louvain_communities(graph, weight="weight", seed=seed)
    communities = sorted(communities, key=min)
    labels = np.zeros(g.num_nodes, dtype=np.int64)
    for i, members in enumerate(communities):
        labels[list(members)] = i
    logger.info("Louvain found %d communities", len(communities))
    return LabelSet(np.arange(g.num_nodes), labels, tuple(str(i) for i in range(len(communities))), LabelKind.LINK)


# -----------------------------
# Probes
# -----------------------------
def _probe(max_iter: int = CF_EPOCHS):
    return make_pipeline(StandardScaler(), LogisticRegression(max_iter=max_iter))


def _pair_scores(Z: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", Z[pairs[:, 0]], Z[pairs[:, 1]])[:, None]


def lp_accuracy(Z: np.ndarray, split: EdgeSplit, rng: np.random.Generator,
                use: str = "test", repeats: int = PROBE_REPEATS) -> float:
    """
    Logistic regression on the inner product of the endpoint embeddings,
    fit on bootstrap resamples of the train pairs and scored on the `use`
    part. Mean over `repeats`.
    """
    pos, neg = split.pairs("train")
    X = np.vstack([_pair_scores(Z, pos), _pair_scores(Z, neg)])
    y = np.concatenate([np.ones(pos.shape[0]), np.zeros(neg.shape[0])])
    tpos, tneg = split.pairs(use)
    if tpos.shape[0] == 0 or pos.shape[0] == 0:
        raise EvaluationError(f"Link prediction needs train and {use} edges")
    Xt = np.vstack([_pair_scores(Z, tpos), _pair_scores(Z, tneg)])
    yt = np.concatenate([np.ones(tpos.shape[0]), np.zeros(tneg.shape[0])])
    scores = []
    for _ in range(repeats):
        idx = rng.integers(0, y.size, size=y.size)
        if np.unique(y[idx]).size < 2:
            idx = np.arange(y.size)
        model = _probe().fit(X[idx], y[idx])
        scores.append(accuracy_score(yt, model.predict(Xt)))
    return float(np.mean(scores))


def cf_accuracy(Z: np.ndarray, labels: LabelSet, rng: np.random.Generator,
                repeats: int = PROBE_REPEATS) -> float:
    """Multinomial logistic regression on stratified 80/20 splits, mean over `repeats`."""
    if np.unique(labels.labels).size < 2:
        raise EvaluationError(f"{labels.kind.value} labels have a single class")
    X, y = Z[labels.nodes], labels.labels
    scores = []
    for _ in range(repeats):
        seed = int(rng.integers(2**31 - 1))
        try:
            X_tr, X_te, y_tr, y_te = train_test_split(
                X, y, test_size=CF_TEST_FRACTION, stratify=y, random_state=seed)
        except ValueError:
            X_tr, X_te, y_tr, y_te = train_test_split(X, y, test_size=CF_TEST_FRACTION, random_state=seed)
        if np.unique(y_tr).size < 2:
            continue
        scores.append(accuracy_score(y_te, _probe().fit(X_tr, y_tr).predict(X_te)))
    if not scores:
        raise EvaluationError("Every classification split had a single training class")
    return float(np.mean(scores))


# -----------------------------
# Partition quality
# -----------------------------
def nmi(z, labels) -> float:
    """I(z; y) / sqrt(H(z) H(y))."""
    z, labels = np.asarray(z), np.asarray(labels)
    if z.shape != labels.shape:
        raise EvaluationError(f"Partitions cover {z.size} and {labels.size} nodes")
    if z.size == 0:
        raise EvaluationError("NMI of empty partitions")
    return float(normalized_mutual_info_score(labels, z, average_method="geometric"))


def modularity(g: MultimodalGraph, z) -> float:
    """sum_k (e_kk - a_k^2) over the homogenized undirected multigraph."""
    z = np.asarray(z, dtype=np.int64)
    if z.shape != (g.num_nodes,):
        raise EvaluationError(f"Assignment covers {z.size} of {g.num_nodes} nodes")
    a = g.undirected_multigraph()
    two_m = a.sum()
    if two_m == 0:
        return 0.0
    _, codes = np.unique(z, return_inverse=True)
    member = sp.csr_matrix((np.ones(z.size), (np.arange(z.size), codes)))
    block = (member.T @ a @ member).toarray()
    e = np.diag(block) / two_m
    share = block.sum(axis=1) / two_m
    return float((e - share ** 2).sum())


# -----------------------------
# Run evaluation
# -----------------------------
def evaluate_run(Z: np.ndarray, assignments: np.ndarray, g: MultimodalGraph, split: EdgeSplit | None,
                 label_sets: dict, seed: int = 0, heldout_only: bool = False) -> dict:
    """
    Report rows for one run; rows that cannot be computed are NaN.

    label_sets maps LabelKind -> LabelSet. With heldout_only, community NMI
    rows are scored on the endpoints of validation and test edges.
    """
    rng = np.random.default_rng(seed)
    rows = {}

    def guarded(name, fn):
        try:
            rows[name] = fn()
        except EvaluationError as e:
            logger.warning("%s skipped: %s", name, e)
            rows[name] = float("nan")

    guarded("LP_ACC", lambda: lp_accuracy(Z, split, rng) if split is not None else float("nan"))
    for kind in (LabelKind.GROUND_TRUTH, LabelKind.TEMPORAL):
        ls = label_sets.get(kind)
        guarded(f"CF_ACC {kind.value}",
                lambda ls=ls: cf_accuracy(Z, ls, rng) if ls is not None and len(ls) else float("nan"))

    scope = split.heldout_nodes() if heldout_only and split is not None else None
    for kind in (LabelKind.GROUND_TRUTH, LabelKind.TEMPORAL, LabelKind.LINK):
        ls = label_sets.get(kind)
        if ls is not None and scope is not None:
            ls = ls.restrict(scope)
        guarded(f"COM_NMI {kind.value}",
                lambda ls=ls: nmi(assignments[ls.nodes], ls.labels) if ls is not None and len(ls) else float("nan"))
    guarded("Modularity", lambda: modularity(g, assignments))
    return rows
