# graph_simulations/temporal_communities/logic/dataset.py

"""
dataset.py

Dataset directory reader/writer (UTF-8, tab separated, "-" for missing cells):

    nodes_<type>.tsv      node_id  t_start  t_end  f0 .. f{k-1}
    edges_<relation>.tsv  src_type  src_id  dst_type  dst_id  t_start  t_end
    labels_<name>.tsv     type  id  label

Node types and relations are registered in sorted file-name order. A node
row whose feature cells are all "-" has no features; both time cells "-"
means no time range.
"""

from __future__ import annotations

import glob
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from graph_simulations.temporal_communities.data.constants import (
    EDGE_FILE_PREFIX, LABEL_FILE_PREFIX, MISSING, NODE_FILE_PREFIX,
)
from graph_simulations.temporal_communities.errors import DatasetFormatError, GraphBuildError
from graph_simulations.temporal_communities.logic.evaluation import LabelKind, LabelSet
from graph_simulations.temporal_communities.logic.graph import (
    EdgeSpec, MultimodalGraph, NodeSpec, build_graph,
)

logger = logging.getLogger(__name__)

NODE_COLUMNS = ["node_id", "t_start", "t_end"]
EDGE_COLUMNS = ["src_type", "src_id", "dst_type", "dst_id", "t_start", "t_end"]
LABEL_COLUMNS = ["type", "id", "label"]
TEMPORAL_LABEL_NAMES = ("time", "temporal")
LINK_LABEL_NAMES = ("louvain", "link")


@dataclass
class Dataset:
    graph: MultimodalGraph
    labels: dict = field(default_factory=dict)      # name -> LabelSet

    def label_set(self, kind: LabelKind, name: str | None = None) -> LabelSet | None:
        if name is not None:
            return self.labels.get(name)
        for ls in self.labels.values():
            if ls.kind is kind:
                return ls
        return None


def _stem(path: str, prefix: str) -> str:
    return os.path.basename(path)[len(prefix):-len(".tsv")]


def _read(path: str, required: list) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, sep="\t", dtype=str, keep_default_na=False, na_filter=False)
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DatasetFormatError(f"Unreadable table ({e})", path=path) from e
    except pd.errors.EmptyDataError:
        raise DatasetFormatError("Missing header row", path=path) from None
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise DatasetFormatError(f"Missing columns {missing}", path=path, line=1)
    return df


def _int(value: str, what: str, path: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise DatasetFormatError(f"Bad {what} {value!r}: expected an integer", path=path, line=line) from None


def _float(value: str, path: str, line: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise DatasetFormatError(f"Bad feature value {value!r}", path=path, line=line) from None


def _time_cells(start: str, end: str, path: str, line: int) -> tuple:
    if start == MISSING and end == MISSING:
        return 0, 0, False
    if MISSING in (start, end):
        raise DatasetFormatError("t_start and t_end must be both given or both '-'", path=path, line=line)
    s, e = _int(start, "t_start", path, line), _int(end, "t_end", path, line)
    if s > e:
        raise DatasetFormatError(f"t_start {s} > t_end {e}", path=path, line=line)
    return s, e, True


def _load_nodes(path: str) -> tuple:
    df = _read(path, NODE_COLUMNS)
    feat_cols = [c for c in df.columns if c not in NODE_COLUMNS]
    n = len(df)
    ids = np.array([_int(v, "node_id", path, i + 2) for i, v in enumerate(df["node_id"])], dtype=np.int64)
    if n and (np.sort(ids) != np.arange(n)).any():
        raise DatasetFormatError(f"node_id values must be exactly 0..{n - 1}", path=path)
    starts, ends = np.zeros(n, np.int64), np.zeros(n, np.int64)
    has_time, has_feat = np.zeros(n, bool), np.zeros(n, bool)
    matrix = np.zeros((n, len(feat_cols)))
    cells = df[feat_cols].to_numpy() if feat_cols else np.zeros((n, 0), dtype=object)
    for row, (s, e) in enumerate(zip(df["t_start"], df["t_end"])):
        line, v = row + 2, ids[row]
        starts[v], ends[v], has_time[v] = _time_cells(s, e, path, line)
        values = cells[row]
        absent = values == MISSING
        if absent.all():
            continue
        if absent.any():
            raise DatasetFormatError("Feature cells must be all given or all '-'", path=path, line=line)
        matrix[v] = [_float(x, path, line) for x in values]
        has_feat[v] = True
    logger.debug("%s: %d nodes, %d feature columns", path, n, len(feat_cols))
    return n, (matrix, has_feat), (starts, ends, has_time)


def _load_edges(path: str, relation: str, counts: dict) -> list:
    df = _read(path, EDGE_COLUMNS)
    specs, groups = [], {}
    for row, rec in enumerate(df.itertuples(index=False)):
        line = row + 2
        for t in (rec.src_type, rec.dst_type):
            if t not in counts:
                raise DatasetFormatError(f"Unknown node type '{t}'", path=path, line=line)
        src = _int(rec.src_id, "src_id", path, line)
        dst = _int(rec.dst_id, "dst_id", path, line)
        for t, v in ((rec.src_type, src), (rec.dst_type, dst)):
            if not 0 <= v < counts[t]:
                raise DatasetFormatError(f"Node {t}:{v} does not exist", path=path, line=line)
        s, e, has = _time_cells(rec.t_start, rec.t_end, path, line)
        groups.setdefault((rec.src_type, rec.dst_type), []).append((src, dst, s, e, has))
    for (st, dt), rows in groups.items():
        cols = list(zip(*rows))
        specs.append(EdgeSpec(
            relation=relation, src_type=st, dst_type=dt,
            src=np.array(cols[0], np.int64), dst=np.array(cols[1], np.int64),
            t_start=np.array(cols[2], np.int64), t_end=np.array(cols[3], np.int64),
            has_time=np.array(cols[4], bool),
        ))
    if not groups:
        logger.warning("%s holds no edges", path)
    return specs


def label_kind(name: str) -> LabelKind:
    if name in TEMPORAL_LABEL_NAMES:
        return LabelKind.TEMPORAL
    if name in LINK_LABEL_NAMES:
        return LabelKind.LINK
    return LabelKind.GROUND_TRUTH


def _load_labels(path: str, g: MultimodalGraph) -> LabelSet:
    df = _read(path, LABEL_COLUMNS)
    nodes = []
    for row, (t, v) in enumerate(zip(df["type"], df["id"])):
        line = row + 2
        try:
            tid = g.type_id(t)
        except KeyError:
            raise DatasetFormatError(f"Unknown node type '{t}'", path=path, line=line) from None
        local = _int(v, "id", path, line)
        if not 0 <= local < g.count(tid):
            raise DatasetFormatError(f"Node {t}:{local} does not exist", path=path, line=line)
        nodes.append(int(g.global_id(tid, local)))
    name = _stem(path, LABEL_FILE_PREFIX)
    kind = label_kind(name)
    try:
        return LabelSet.from_pairs(nodes, df["label"].tolist(), kind)
    except ValueError as e:
        raise DatasetFormatError(str(e), path=path) from None


def load_dataset(directory: str) -> Dataset:
    """Builds the graph and its label sets from a dataset directory."""
    node_files = sorted(glob.glob(os.path.join(directory, f"{NODE_FILE_PREFIX}*.tsv")))
    if not node_files:
        raise DatasetFormatError(f"No {NODE_FILE_PREFIX}<type>.tsv files", path=directory)
    node_specs, features, times = [], {}, {}
    for path in node_files:
        name = _stem(path, NODE_FILE_PREFIX)
        count, feats, tr = _load_nodes(path)
        node_specs.append(NodeSpec(name, count))
        if feats[0].shape[1]:
            features[name] = feats
        times[name] = tr
    counts = {s.name: s.count for s in node_specs}

    edge_specs = []
    for path in sorted(glob.glob(os.path.join(directory, f"{EDGE_FILE_PREFIX}*.tsv"))):
        edge_specs += _load_edges(path, _stem(path, EDGE_FILE_PREFIX), counts)
    try:
        g = build_graph(node_specs, edge_specs, features=features, time_ranges=times)
    except GraphBuildError as e:
        raise DatasetFormatError(str(e), path=directory) from e

    labels = {}
    for path in sorted(glob.glob(os.path.join(directory, f"{LABEL_FILE_PREFIX}*.tsv"))):
        labels[_stem(path, LABEL_FILE_PREFIX)] = _load_labels(path, g)
    logger.info("Loaded %s: %d nodes, %d edges, %d label sets", directory, g.num_nodes, g.num_edges, len(labels))
    return Dataset(graph=g, labels=labels)


# -----------------------------
# Writing
# -----------------------------
def _fmt_time(has: bool, value: int) -> str:
    return str(int(value)) if has else MISSING


def _write(df: pd.DataFrame, path: str) -> None:
    df.to_csv(path, sep="\t", index=False, lineterminator="\n")


def save_dataset(dataset: Dataset | MultimodalGraph, directory: str) -> list:
    """Writes the directory format; returns the written paths."""
    if isinstance(dataset, MultimodalGraph):
        dataset = Dataset(dataset)
    g = dataset.graph
    os.makedirs(directory, exist_ok=True)
    written = []
    for t, name in enumerate(g.node_types):
        nodes = g.nodes_of_type(t)
        width = g.features.width(t)
        rows = {
            "node_id": [str(i) for i in range(nodes.size)],
            "t_start": [_fmt_time(h, s) for h, s in zip(g.has_time[nodes], g.t_start[nodes])],
            "t_end": [_fmt_time(h, e) for h, e in zip(g.has_time[nodes], g.t_end[nodes])],
        }
        matrix = g.features.matrices[t]
        present = g.has_feature[nodes]
        for j in range(width):
            rows[f"f{j}"] = [str(float(x)) if p else MISSING for x, p in zip(matrix[:, j], present)]
        path = os.path.join(directory, f"{NODE_FILE_PREFIX}{name}.tsv")
        _write(pd.DataFrame(rows, columns=NODE_COLUMNS + [f"f{j}" for j in range(width)]), path)
        written.append(path)

    for r, rel in enumerate(g.relation_types):
        src, dst = g.edge_src[r], g.edge_dst[r]
        has = g.edge_has_time[r]
        df = pd.DataFrame({
            "src_type": [g.node_types[t] for t in g.node_type[src]],
            "src_id": [str(v) for v in g.local_id(src)],
            "dst_type": [g.node_types[t] for t in g.node_type[dst]],
            "dst_id": [str(v) for v in g.local_id(dst)],
            "t_start": [_fmt_time(h, s) for h, s in zip(has, g.edge_t_start[r])],
            "t_end": [_fmt_time(h, e) for h, e in zip(has, g.edge_t_end[r])],
        }, columns=EDGE_COLUMNS)
        path = os.path.join(directory, f"{EDGE_FILE_PREFIX}{rel}.tsv")
        _write(df, path)
        written.append(path)

    for name, ls in dataset.labels.items():
        df = pd.DataFrame({
            "type": [g.node_types[t] for t in g.node_type[ls.nodes]],
            "id": [str(v) for v in g.local_id(ls.nodes)],
            "label": list(ls.names()),
        }, columns=LABEL_COLUMNS)
        path = os.path.join(directory, f"{LABEL_FILE_PREFIX}{name}.tsv")
        _write(df, path)
        written.append(path)
    logger.info("Wrote dataset with %d files to %s", len(written), directory)
    return written


def describe(dataset: Dataset) -> dict:
    """Counts used by the `prepare` summary."""
    g = dataset.graph
    span = g.time_span()
    return {
        "Node types": g.counts(),
        "Relations": {r: int(len(s)) for r, s in zip(g.relation_types, g.edge_src)},
        "Nodes": g.num_nodes,
        "Edges": g.num_edges,
        "With features": int(g.has_feature.sum()),
        "With time range": int(g.has_time.sum()),
        "Time span": None if span is None else [span.start, span.end],
        "Label sets": {name: {"kind": ls.kind.value, "nodes": len(ls), "classes": len(ls.vocabulary)}
                       for name, ls in dataset.labels.items()},
    }
