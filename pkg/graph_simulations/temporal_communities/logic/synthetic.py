# graph_simulations/temporal_communities/logic/synthetic.py

"""
synthetic.py

Stochastic-block-model datasets with a temporal partition and per-block
Gaussian features, used to exercise the toolkit end to end.

For every relation and block pair the edge count is drawn as
Binomial(possible pairs, p_in or p_out) and that many distinct pairs are
picked uniformly. Time bins are either independent of the blocks or tied to
them (bin = block mod bins).
"""

from __future__ import annotations

import json
import logging
import os
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from graph_simulations.temporal_communities.data.constants import GENERATOR_META_FILE
from graph_simulations.temporal_communities.errors import ConfigError
from graph_simulations.temporal_communities.logic.dataset import Dataset, save_dataset
from graph_simulations.temporal_communities.logic.evaluation import LabelKind, LabelSet
from graph_simulations.temporal_communities.logic.graph import EdgeSpec, NodeSpec, build_graph

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticSpec:
    node_types: tuple = (("node", 100),)                 # (name, count)
    relations: tuple = (("link", "node", "node"),)       # (relation, src type, dst type)
    blocks: int = 2
    p_in: float = 0.2
    p_out: float = 0.01
    separable: bool = True
    time_bins: int = 4
    time_independent: bool = True
    ticks_per_bin: int = 10
    range_width: int = 0
    missing_time: float = 0.0
    feature_dim: int = 8
    feature_separation: float = 3.0
    feature_noise: float = 1.0
    missing_features: float = 0.0

    def __post_init__(self):
        names = [n for n, _ in self.node_types]
        if len(set(names)) != len(names) or not names:
            raise ConfigError(f"Node type names must be unique and nonempty: {names}")
        for rel, s, d in self.relations:
            if s not in names or d not in names:
                raise ConfigError(f"Relation '{rel}' references an unknown node type")
        if self.blocks < 1 or self.time_bins < 1 or self.ticks_per_bin < 1:
            raise ConfigError("blocks, time_bins and ticks_per_bin must be >= 1")
        for key in ("p_in", "p_out", "missing_time", "missing_features"):
            if not 0.0 <= getattr(self, key) <= 1.0:
                raise ConfigError(f"{key} must lie in [0, 1], got {getattr(self, key)}")
        if self.range_width < 0 or self.feature_dim < 0:
            raise ConfigError("range_width and feature_dim must be non-negative")

    @property
    def num_nodes(self) -> int:
        return int(sum(c for _, c in self.node_types))

    @classmethod
    def from_dict(cls, values: dict) -> "SyntheticSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"Unknown synthetic spec keys: {sorted(unknown)}")
        values = dict(values)
        if "node_types" in values:
            values["node_types"] = tuple((str(n), int(c)) for n, c in values["node_types"])
        if "relations" in values:
            values["relations"] = tuple(tuple(str(x) for x in r) for r in values["relations"])
        return cls(**values)

    @classmethod
    def load(cls, path: str) -> "SyntheticSpec":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["node_types"] = [list(x) for x in self.node_types]
        d["relations"] = [list(x) for x in self.relations]
        return d


def _balanced(count: int, groups: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(count) % groups).astype(np.int64)


def _exact_mask(n: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask with exactly round(fraction * n) True entries."""
    mask = np.zeros(n, dtype=bool)
    mask[rng.choice(n, size=int(round(fraction * n)), replace=False)] = True
    return mask


def _block_pairs(src_nodes, dst_nodes, p: float, same_set: bool, rng: np.random.Generator) -> tuple:
    """Distinct pairs between two node sets, count ~ Binomial(possible, p); no self loops."""
    ns, nd = src_nodes.size, dst_nodes.size
    if same_set:
        possible = ns * (ns - 1) // 2
    else:
        possible = ns * nd
    if possible == 0 or p == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    count = int(rng.binomial(possible, p))
    picks = rng.choice(possible, size=count, replace=False)
    if same_set:
        iu, ju = np.triu_indices(ns, k=1)
        return src_nodes[iu[picks]], src_nodes[ju[picks]]
    return src_nodes[picks // nd], dst_nodes[picks % nd]


def gen_synthetic(spec: SyntheticSpec, seed: int = 0, out_dir: str | None = None) -> Dataset:
    """
    Deterministic dataset for (spec, seed). With out_dir the dataset, the
    true block / time-bin labels and generator metadata are written there.
    """
    if spec.separable and spec.p_in <= spec.p_out:
        msg = f"Requested separable blocks but p_in ({spec.p_in}) <= p_out ({spec.p_out})"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        logger.warning(msg)
    rng = np.random.default_rng(seed)
    names = [n for n, _ in spec.node_types]
    counts = {n: int(c) for n, c in spec.node_types}

    block = {n: _balanced(counts[n], spec.blocks, rng) for n in names}
    if spec.time_independent:
        tbin = {n: _balanced(counts[n], spec.time_bins, rng) for n in names}
    else:
        tbin = {n: block[n] % spec.time_bins for n in names}

    times = {}
    for n in names:
        start = tbin[n] * spec.ticks_per_bin + rng.integers(0, spec.ticks_per_bin, size=counts[n])
        end = start + (rng.integers(0, spec.range_width + 1, size=counts[n]) if spec.range_width else 0)
        present = ~_exact_mask(counts[n], spec.missing_time, rng)
        times[n] = (start.astype(np.int64), np.asarray(end, dtype=np.int64), present)

    features = {}
    if spec.feature_dim:
        centers = rng.normal(0.0, spec.feature_separation, size=(spec.blocks, spec.feature_dim))
        missing = _exact_mask(spec.num_nodes, spec.missing_features, rng)
        offset = 0
        for n in names:
            x = centers[block[n]] + rng.normal(0.0, spec.feature_noise, size=(counts[n], spec.feature_dim))
            features[n] = (x, ~missing[offset:offset + counts[n]])
            offset += counts[n]

    edge_specs = []
    for rel, st, dt in spec.relations:
        src_all, dst_all = [], []
        same_type = st == dt
        for a in range(spec.blocks):
            for b in range(spec.blocks):
                if same_type and b < a:
                    continue
                p = spec.p_in if a == b else spec.p_out
                s_nodes = np.flatnonzero(block[st] == a)
                d_nodes = np.flatnonzero(block[dt] == b)
                s, d = _block_pairs(s_nodes, d_nodes, p, same_type and a == b, rng)
                src_all.append(s)
                dst_all.append(d)
        src, dst = np.concatenate(src_all), np.concatenate(dst_all)
        t_src, t_dst = times[st], times[dt]
        has = t_src[2][src] & t_dst[2][dst]
        t = np.maximum(t_src[0][src], t_dst[0][dst])
        edge_specs.append(EdgeSpec(rel, st, dt, src, dst, t_start=t, t_end=t, has_time=has))
        logger.debug("Relation %s: %d edges", rel, src.size)

    g = build_graph([NodeSpec(n, counts[n]) for n in names], edge_specs,
                    features=features, time_ranges=times)
    blocks_all = np.concatenate([block[n] for n in names])
    bins_all = np.concatenate([tbin[n] for n in names])
    everyone = np.arange(g.num_nodes)
    dataset = Dataset(graph=g, labels={
        "blocks": LabelSet.from_pairs(everyone, blocks_all, LabelKind.GROUND_TRUTH),
        "time": LabelSet.from_pairs(everyone, bins_all, LabelKind.TEMPORAL),
    })
    logger.info("Generated SBM: %d nodes, %d edges, %d blocks, %d time bins",
                g.num_nodes, g.num_edges, spec.blocks, spec.time_bins)

    if out_dir is not None:
        save_dataset(dataset, out_dir)
        meta = {
            "seed": int(seed),
            "spec": spec.to_dict(),
            "true_blocks": blocks_all.tolist(),
            "true_time_bins": bins_all.tolist(),
        }
        with open(os.path.join(out_dir, GENERATOR_META_FILE), "w", encoding="utf-8") as f:
            json.dump(meta, f, indent=2)
            f.write("\n")
    return dataset
