# graph_simulations/temporal_communities/logic/graph.py

"""
graph.py

Immutable typed multimodal graph: node/relation type registries, per-relation
CSR adjacency (forward and reverse), per-type feature tables, optional time
ranges on nodes and edges, incompleteness masks and a temporal index.

Nodes carry a global id. Nodes of one type occupy a contiguous global range,
so global = type_offsets[type] + local.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from graph_simulations.temporal_communities.data.constants import FLOAT
from graph_simulations.temporal_communities.errors import GraphBuildError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeRange:
    """Closed tick interval; bounds may be +-inf for open windows."""
    start: float
    end: float

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"TimeRange start {self.start} > end {self.end}")

    @classmethod
    def everything(cls) -> "TimeRange":
        return cls(-np.inf, np.inf)

    @classmethod
    def centered(cls, t: float, width: float) -> "TimeRange":
        return cls(t - width / 2.0, t + width / 2.0)

    def intersects(self, start, end) -> bool:
        return bool(start <= self.end and end >= self.start)


@dataclass(frozen=True)
class NodeSpec:
    name: str
    count: int


@dataclass(frozen=True)
class EdgeSpec:
    """Edges of one relation between one pair of node types (local ids)."""
    relation: str
    src_type: str
    dst_type: str
    src: np.ndarray
    dst: np.ndarray
    t_start: np.ndarray | None = None
    t_end: np.ndarray | None = None
    has_time: np.ndarray | None = None


@dataclass(frozen=True)
class FeatureTable:
    """Per-type dense matrices; rows of absent features are zero and never read."""
    matrices: tuple
    has_feature: np.ndarray

    def width(self, type_id: int) -> int:
        return self.matrices[type_id].shape[1]


@dataclass(frozen=True, eq=False)
class MultimodalGraph:
    node_types: tuple
    relation_types: tuple
    type_offsets: np.ndarray
    node_type: np.ndarray
    edge_src: tuple                 # per relation, global ids
    edge_dst: tuple
    edge_t_start: tuple
    edge_t_end: tuple
    edge_has_time: tuple
    forward: tuple                  # per relation csr (N x N), data = multiplicity
    reverse: tuple
    adjacency: sp.csr_matrix        # all relations, both directions, binary
    features: FeatureTable
    t_start: np.ndarray
    t_end: np.ndarray
    has_time: np.ndarray
    is_seen: np.ndarray
    _time_order: np.ndarray = field(repr=False)
    _time_sorted_start: np.ndarray = field(repr=False)
    _max_span: float = field(repr=False)

    # -----------------------------
    # Sizes and ids
    # -----------------------------
    @property
    def num_nodes(self) -> int:
        return int(self.node_type.shape[0])

    @property
    def num_edges(self) -> int:
        return int(sum(len(s) for s in self.edge_src))

    @property
    def has_feature(self) -> np.ndarray:
        return self.features.has_feature

    def type_id(self, name: str) -> int:
        try:
            return self.node_types.index(name)
        except ValueError:
            raise KeyError(f"Unknown node type '{name}'") from None

    def relation_id(self, name: str) -> int:
        try:
            return self.relation_types.index(name)
        except ValueError:
            raise KeyError(f"Unknown relation '{name}'") from None

    def count(self, type_id: int) -> int:
        return int(self.type_offsets[type_id + 1] - self.type_offsets[type_id])

    def counts(self) -> dict:
        return {name: self.count(i) for i, name in enumerate(self.node_types)}

    def nodes_of_type(self, type_id: int) -> np.ndarray:
        return np.arange(self.type_offsets[type_id], self.type_offsets[type_id + 1])

    def global_id(self, type_id: int, local) -> np.ndarray:
        return self.type_offsets[type_id] + np.asarray(local)

    def local_id(self, v) -> np.ndarray:
        v = np.asarray(v)
        return v - self.type_offsets[self.node_type[v]]

    def feature_row(self, v: int) -> np.ndarray:
        if not self.has_feature[v]:
            raise KeyError(f"Node {v} has no features")
        t = self.node_type[v]
        return self.features.matrices[t][v - self.type_offsets[t]]

    # -----------------------------
    # Neighbourhood queries
    # -----------------------------
    def neighbors(self, v: int) -> np.ndarray:
        """Undirected neighbours over all relations, sorted, without duplicates."""
        a = self.adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]]

    def degree(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def out_neighbors(self, v: int, relation: int | None = None) -> np.ndarray:
        """
        Neighbours reached through `relation` (or any relation) in either
        stored direction. Sorted, duplicates removed.
        """
        if relation is None:
            return self.neighbors(v)
        fwd, rev = self.forward[relation], self.reverse[relation]
        parts = (
            fwd.indices[fwd.indptr[v]:fwd.indptr[v + 1]],
            rev.indices[rev.indptr[v]:rev.indptr[v + 1]],
        )
        return np.unique(np.concatenate(parts))

    def successors(self, v: int, relation: int) -> np.ndarray:
        fwd = self.forward[relation]
        return fwd.indices[fwd.indptr[v]:fwd.indptr[v + 1]]

    def predecessors(self, v: int, relation: int) -> np.ndarray:
        rev = self.reverse[relation]
        return rev.indices[rev.indptr[v]:rev.indptr[v + 1]]

    # -----------------------------
    # Temporal queries
    # -----------------------------
    def time_span(self) -> TimeRange | None:
        if not self.has_time.any():
            return None
        return TimeRange(
            float(self.t_start[self.has_time].min()), float(self.t_end[self.has_time].max())
        )

    def in_window(self, nodes, window: TimeRange) -> np.ndarray:
        """Mask of nodes whose stored range intersects the closed window."""
        nodes = np.asarray(nodes)
        return (
            self.has_time[nodes]
            & (self.t_start[nodes] <= window.end)
            & (self.t_end[nodes] >= window.start)
        )

    def nodes_in_window(self, window: TimeRange) -> np.ndarray:
        """Timestamped nodes intersecting `window`, ascending global id."""
        if self._time_order.size == 0:
            return self._time_order
        hi = np.searchsorted(self._time_sorted_start, window.end, side="right")
        lo = np.searchsorted(self._time_sorted_start, window.start - self._max_span, side="left")
        cand = self._time_order[lo:hi]
        hit = cand[self.t_end[cand] >= window.start]
        return np.sort(hit)

    # -----------------------------
    # Derived graphs
    # -----------------------------
    def with_masks(self, has_feature=None, has_time=None, is_seen=None) -> "MultimodalGraph":
        """
        Copy with some masks switched off. Masks may only hide stored data,
        never invent it.
        """
        feats = self.features
        if has_feature is not None:
            has_feature = np.asarray(has_feature, dtype=bool)
            if (has_feature & ~self.features.has_feature).any():
                raise GraphBuildError("has_feature mask enables nodes without stored features")
            matrices = []
            for t, m in enumerate(self.features.matrices):
                m = m.copy()
                rows = has_feature[self.nodes_of_type(t)]
                m[~rows] = 0.0
                matrices.append(m)
            feats = FeatureTable(tuple(matrices), has_feature)
        t_start, t_end, ht = self.t_start, self.t_end, self.has_time
        if has_time is not None:
            has_time = np.asarray(has_time, dtype=bool)
            if (has_time & ~self.has_time).any():
                raise GraphBuildError("has_time mask enables nodes without stored time ranges")
            ht = has_time
            t_start = np.where(ht, self.t_start, 0)
            t_end = np.where(ht, self.t_end, 0)
        seen = self.is_seen if is_seen is None else np.asarray(is_seen, dtype=bool)
        return _assemble(
            self.node_types, self.relation_types, self.type_offsets,
            self.edge_src, self.edge_dst, self.edge_t_start, self.edge_t_end, self.edge_has_time,
            feats, t_start, t_end, ht, seen,
        )

    def without_edges_of(self, nodes) -> "MultimodalGraph":
        """Copy with every edge incident to `nodes` removed."""
        drop = np.zeros(self.num_nodes, dtype=bool)
        drop[np.asarray(nodes, dtype=np.int64)] = True
        keep = [~(drop[s] | drop[d]) for s, d in zip(self.edge_src, self.edge_dst)]
        return _assemble(
            self.node_types, self.relation_types, self.type_offsets,
            tuple(s[k] for s, k in zip(self.edge_src, keep)),
            tuple(d[k] for d, k in zip(self.edge_dst, keep)),
            tuple(t[k] for t, k in zip(self.edge_t_start, keep)),
            tuple(t[k] for t, k in zip(self.edge_t_end, keep)),
            tuple(t[k] for t, k in zip(self.edge_has_time, keep)),
            self.features, self.t_start, self.t_end, self.has_time, self.is_seen,
        )

    def without_edge_pairs(self, pairs) -> "MultimodalGraph":
        """
        Copy without any edge joining a listed node pair: every relation,
        every parallel copy and both stored directions.
        """
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        n = self.num_nodes
        drop = pairs.min(axis=1) * n + pairs.max(axis=1)
        keep = [~np.isin(np.minimum(s, d) * n + np.maximum(s, d), drop)
                for s, d in zip(self.edge_src, self.edge_dst)]
        return _assemble(
            self.node_types, self.relation_types, self.type_offsets,
            tuple(s[k] for s, k in zip(self.edge_src, keep)),
            tuple(d[k] for d, k in zip(self.edge_dst, keep)),
            tuple(t[k] for t, k in zip(self.edge_t_start, keep)),
            tuple(t[k] for t, k in zip(self.edge_t_end, keep)),
            tuple(t[k] for t, k in zip(self.edge_has_time, keep)),
            self.features, self.t_start, self.t_end, self.has_time, self.is_seen,
        )

    def homogeneous_edges(self) -> np.ndarray:
        """All stored edges as an (E, 2) array of global ids, relation order."""
        if self.num_edges == 0:
            return np.zeros((0, 2), dtype=np.int64)
        return np.column_stack([np.concatenate(self.edge_src), np.concatenate(self.edge_dst)])

    def node_pairs(self) -> np.ndarray:
        """Distinct unordered linked pairs (u <= v) over all relations, lexicographic."""
        edges = self.homogeneous_edges()
        if edges.shape[0] == 0:
            return edges
        return np.unique(np.sort(edges, axis=1), axis=0)

    def undirected_multigraph(self) -> sp.csr_matrix:
        """Symmetric adjacency with all relations merged, multi-edges counted."""
        a = sp.csr_matrix((self.num_nodes, self.num_nodes), dtype=FLOAT)
        for f in self.forward:
            a = a + f + f.T
        return a.tocsr()


# -----------------------------
# Construction
# -----------------------------
def build_graph(
    node_specs: Sequence[NodeSpec],
    edge_specs: Sequence[EdgeSpec] = (),
    features: Mapping[str, tuple] | None = None,
    time_ranges: Mapping[str, tuple] | None = None,
    is_seen: Mapping[str, np.ndarray] | None = None,
) -> MultimodalGraph:
    """
    Builds and validates a MultimodalGraph.

    Parameters:
        node_specs : ordered node types with their counts
        edge_specs : edges per (relation, src type, dst type), local ids
        features : type -> (matrix [count x d_type], present mask [count])
        time_ranges : type -> (starts [count], ends [count], present mask [count])
        is_seen : type -> bool mask; all nodes are seen by default

    Returns:
        MultimodalGraph
    """
    features = features or {}
    time_ranges = time_ranges or {}
    is_seen = is_seen or {}

    node_types = tuple(s.name for s in node_specs)
    if len(set(node_types)) != len(node_types):
        raise GraphBuildError(f"Duplicate node type names: {node_types}")
    counts = np.array([int(s.count) for s in node_specs], dtype=np.int64)
    if (counts < 0).any():
        raise GraphBuildError("Node counts must be non-negative")
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    n = int(offsets[-1])
    index = {name: i for i, name in enumerate(node_types)}

    for name in list(features) + list(time_ranges) + list(is_seen):
        if name not in index:
            raise GraphBuildError(f"Data given for unknown node type '{name}'")

    # Features
    matrices, has_feature = [], np.zeros(n, dtype=bool)
    for t, name in enumerate(node_types):
        count = int(counts[t])
        if name in features:
            matrix, present = features[name]
            matrix = np.asarray(matrix, dtype=FLOAT)
            if matrix.ndim != 2 or matrix.shape[0] != count:
                raise GraphBuildError(
                    f"Feature matrix of type '{name}' must have {count} rows, got shape {matrix.shape}"
                )
            present = np.ones(count, dtype=bool) if present is None else np.asarray(present, dtype=bool)
            if present.shape != (count,):
                raise GraphBuildError(f"Feature mask of type '{name}' must have length {count}")
            if not np.isfinite(matrix[present]).all():
                raise GraphBuildError(f"Non-finite feature values in type '{name}'")
            matrix = np.where(present[:, None], matrix, 0.0)
            if matrix.shape[1] == 0:
                present = np.zeros(count, dtype=bool)
        else:
            matrix = np.zeros((count, 0), dtype=FLOAT)
            present = np.zeros(count, dtype=bool)
        matrices.append(matrix)
        has_feature[offsets[t]:offsets[t + 1]] = present
    feats = FeatureTable(tuple(matrices), has_feature)

    # Node time ranges
    t_start = np.zeros(n, dtype=np.int64)
    t_end = np.zeros(n, dtype=np.int64)
    has_time = np.zeros(n, dtype=bool)
    for name, (starts, ends, present) in time_ranges.items():
        t = index[name]
        count = int(counts[t])
        starts = np.asarray(starts)
        ends = np.asarray(ends)
        present = np.ones(count, dtype=bool) if present is None else np.asarray(present, dtype=bool)
        if starts.shape != (count,) or ends.shape != (count,) or present.shape != (count,):
            raise GraphBuildError(f"Time arrays of type '{name}' must have length {count}")
        bad = present & (starts > ends)
        if bad.any():
            raise GraphBuildError(
                f"Node time range start > end for type '{name}', local id {int(np.flatnonzero(bad)[0])}"
            )
        sl = slice(offsets[t], offsets[t + 1])
        t_start[sl] = np.where(present, starts, 0).astype(np.int64)
        t_end[sl] = np.where(present, ends, 0).astype(np.int64)
        has_time[sl] = present

    seen = np.ones(n, dtype=bool)
    for name, mask in is_seen.items():
        t = index[name]
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (int(counts[t]),):
            raise GraphBuildError(f"is_seen mask of type '{name}' must have length {int(counts[t])}")
        seen[offsets[t]:offsets[t + 1]] = mask

    # Edges
    relation_types: list = []
    per_rel = {}
    for spec in edge_specs:
        for end_name in (spec.src_type, spec.dst_type):
            if end_name not in index:
                raise GraphBuildError(
                    f"Relation '{spec.relation}' references unknown node type '{end_name}'"
                )
        src = np.asarray(spec.src, dtype=np.int64)
        dst = np.asarray(spec.dst, dtype=np.int64)
        if src.shape != dst.shape or src.ndim != 1:
            raise GraphBuildError(f"Relation '{spec.relation}': src/dst arrays differ in shape")
        ts, td = index[spec.src_type], index[spec.dst_type]
        for ids, t, side in ((src, ts, "src"), (dst, td, "dst")):
            bad = (ids < 0) | (ids >= counts[t])
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                raise GraphBuildError(
                    f"Dangling edge #{i} of relation '{spec.relation}': "
                    f"({spec.src_type}:{int(src[i])} -> {spec.dst_type}:{int(dst[i])}), "
                    f"{side} index beyond count {int(counts[t])} of type '{node_types[t]}'"
                )
        m = len(src)
        if spec.has_time is None:
            e_has = np.zeros(m, dtype=bool) if spec.t_start is None else np.ones(m, dtype=bool)
        else:
            e_has = np.asarray(spec.has_time, dtype=bool)
        e_start = np.zeros(m, dtype=np.int64) if spec.t_start is None else np.asarray(spec.t_start)
        e_end = e_start.copy() if spec.t_end is None else np.asarray(spec.t_end)
        if e_start.shape != (m,) or e_end.shape != (m,) or e_has.shape != (m,):
            raise GraphBuildError(f"Relation '{spec.relation}': time arrays must have length {m}")
        if (e_has & (e_start > e_end)).any():
            raise GraphBuildError(f"Relation '{spec.relation}': edge time range start > end")
        if spec.relation not in per_rel:
            relation_types.append(spec.relation)
            per_rel[spec.relation] = []
        per_rel[spec.relation].append((
            src + offsets[ts], dst + offsets[td],
            np.where(e_has, e_start, 0).astype(np.int64),
            np.where(e_has, e_end, 0).astype(np.int64),
            e_has,
        ))

    def _cat(parts, i, dtype):
        return np.concatenate([p[i] for p in parts]).astype(dtype) if parts else np.zeros(0, dtype)

    edge_src = tuple(_cat(per_rel[r], 0, np.int64) for r in relation_types)
    edge_dst = tuple(_cat(per_rel[r], 1, np.int64) for r in relation_types)
    edge_ts = tuple(_cat(per_rel[r], 2, np.int64) for r in relation_types)
    edge_te = tuple(_cat(per_rel[r], 3, np.int64) for r in relation_types)
    edge_ht = tuple(_cat(per_rel[r], 4, bool) for r in relation_types)

    g = _assemble(
        node_types, tuple(relation_types), offsets,
        edge_src, edge_dst, edge_ts, edge_te, edge_ht,
        feats, t_start, t_end, has_time, seen,
    )
    logger.debug("Built graph: %s nodes, %s edges, %s relations",
                 g.num_nodes, g.num_edges, len(g.relation_types))
    return g


def _assemble(node_types, relation_types, offsets, edge_src, edge_dst,
              edge_ts, edge_te, edge_ht, feats, t_start, t_end, has_time, seen) -> MultimodalGraph:
    n = int(offsets[-1])
    node_type = np.repeat(np.arange(len(node_types)), np.diff(offsets)).astype(np.int64)

    forward, reverse = [], []
    undirected = sp.csr_matrix((n, n), dtype=FLOAT)
    for src, dst in zip(edge_src, edge_dst):
        f = sp.csr_matrix((np.ones(len(src), dtype=FLOAT), (src, dst)), shape=(n, n))
        f.sum_duplicates()
        f.sort_indices()
        r = f.T.tocsr()
        r.sort_indices()
        forward.append(f)
        reverse.append(r)
        undirected = undirected + f + r
    undirected = undirected.tocsr()
    undirected.data[:] = 1.0
    undirected.sort_indices()

    timed = np.flatnonzero(has_time)
    order = timed[np.argsort(t_start[timed], kind="stable")]
    spans = (t_end[timed] - t_start[timed]) if timed.size else np.zeros(0)
    max_span = float(spans.max()) if spans.size else 0.0

    return MultimodalGraph(
        node_types=tuple(node_types),
        relation_types=tuple(relation_types),
        type_offsets=np.asarray(offsets, dtype=np.int64),
        node_type=node_type,
        edge_src=tuple(edge_src),
        edge_dst=tuple(edge_dst),
        edge_t_start=tuple(edge_ts),
        edge_t_end=tuple(edge_te),
        edge_has_time=tuple(edge_ht),
        forward=tuple(forward),
        reverse=tuple(reverse),
        adjacency=undirected,
        features=feats,
        t_start=np.asarray(t_start, dtype=np.int64),
        t_end=np.asarray(t_end, dtype=np.int64),
        has_time=np.asarray(has_time, dtype=bool),
        is_seen=np.asarray(seen, dtype=bool),
        _time_order=order.astype(np.int64),
        _time_sorted_start=t_start[order],
        _max_span=max_span,
    )
