# graph_simulations/temporal_communities/logic/sampling.py

"""
sampling.py

Context-window and neighbourhood samplers.

- budget_sample : layered typed subgraph around a batch with a per-type cap
- node2vec_walk : second-order biased topological walk
- temporal_rw   : walk that stays inside a time window, restarting on dead ends
- ballroom_walk : temporal context of a query node, not restricted to adjacency
- negative_sample, make_batch

Every sampler is a pure function of (graph, arguments, generator state).
Generators come from derive_rng so parallel callers can reproduce a stream
from (base seed, node, epoch).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from graph_simulations.temporal_communities.data.constants import RESTART_FACTOR
from graph_simulations.temporal_communities.logic.graph import MultimodalGraph, TimeRange

logger = logging.getLogger(__name__)

WalkPath = np.ndarray


def derive_rng(base_seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for (base_seed, node_id, epoch, ...)."""
    return np.random.default_rng(np.random.SeedSequence([int(base_seed), *(int(k) for k in keys)]))


# -----------------------------
# Budget subgraph sampling
# -----------------------------
@dataclass(frozen=True)
class SampledSubgraph:
    """
    nodes[i] is the parent (global) id of local node i; the batch occupies
    positions 0..batch_size-1 in batch order. Edges are induced edges in local
    ids, one entry per stored edge and relation.
    """
    nodes: np.ndarray
    layer: np.ndarray
    node_type: np.ndarray
    batch_size: int
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_relation: np.ndarray

    @property
    def num_nodes(self) -> int:
        return int(self.nodes.shape[0])

    def nodes_of_type(self, type_id: int) -> np.ndarray:
        """Local positions of the nodes of one type."""
        return np.flatnonzero(self.node_type == type_id)

    def layer_counts(self, num_types: int) -> np.ndarray:
        """(layers + 1) x num_types table of node counts."""
        depth = int(self.layer.max()) + 1 if self.layer.size else 0
        table = np.zeros((depth, num_types), dtype=np.int64)
        np.add.at(table, (self.layer, self.node_type), 1)
        return table


def budget_sample(g: MultimodalGraph, batch, layers: int, budget, rng: np.random.Generator) -> SampledSubgraph:
    """
    Expands `batch` for `layers` hops. At every layer at most m * |batch| new
    nodes per node type are kept, drawn uniformly without replacement from the
    typed frontier candidates.

    Parameters:
        batch : node ids (duplicates are dropped, first occurrence kept)
        layers : L >= 0
        budget : budget multiple m, or one multiple per layer (last repeats)
    """
    batch = np.asarray(batch, dtype=np.int64)
    _, first = np.unique(batch, return_index=True)
    batch = batch[np.sort(first)]
    if batch.size == 0:
        raise ValueError("budget_sample needs a nonempty batch")
    budgets = np.atleast_1d(np.asarray(budget, dtype=np.int64))
    if (budgets < 1).any():
        raise ValueError(f"Budget multiples must be >= 1, got {budget}")

    chosen = np.zeros(g.num_nodes, dtype=bool)
    chosen[batch] = True
    parts, depth = [batch], [np.zeros(batch.size, dtype=np.int64)]
    frontier = batch
    adj = g.adjacency
    for layer in range(1, layers + 1):
        if frontier.size == 0:
            break
        cap = int(budgets[min(layer, budgets.size) - 1]) * batch.size
        cand = np.unique(adj[frontier].indices)
        cand = cand[~chosen[cand]]
        picked = []
        for t in range(len(g.node_types)):
            typed = cand[g.node_type[cand] == t]
            if typed.size > cap:
                typed = np.sort(rng.choice(typed, size=cap, replace=False))
            picked.append(typed)
        frontier = np.sort(np.concatenate(picked)) if picked else cand[:0]
        chosen[frontier] = True
        parts.append(frontier)
        depth.append(np.full(frontier.size, layer, dtype=np.int64))

    nodes = np.concatenate(parts)
    src_l, dst_l, rel_l = [], [], []
    for r, fwd in enumerate(g.forward):
        sub = fwd[nodes][:, nodes].tocoo()
        # multiplicity kept as repeated entries
        reps = sub.data.astype(np.int64)
        src_l.append(np.repeat(sub.row, reps))
        dst_l.append(np.repeat(sub.col, reps))
        rel_l.append(np.full(int(reps.sum()), r, dtype=np.int64))
    cat = (lambda xs: np.concatenate(xs).astype(np.int64)) if src_l else (lambda xs: np.zeros(0, np.int64))
    return SampledSubgraph(
        nodes=nodes,
        layer=np.concatenate(depth),
        node_type=g.node_type[nodes],
        batch_size=int(batch.size),
        edge_src=cat(src_l),
        edge_dst=cat(dst_l),
        edge_relation=cat(rel_l),
    )


# -----------------------------
# Topological walks
# -----------------------------
def node2vec_transition(g: MultimodalGraph, prev: int | None, cur: int, p: float, q: float):
    """Neighbours of `cur` and their normalised second-order probabilities."""
    nbrs = g.neighbors(cur)
    if nbrs.size == 0:
        return nbrs, np.zeros(0)
    if prev is None:
        return nbrs, np.full(nbrs.size, 1.0 / nbrs.size)
    weights = np.full(nbrs.size, 1.0 / q)
    weights[np.isin(nbrs, g.neighbors(prev), assume_unique=True)] = 1.0
    weights[nbrs == prev] = 1.0 / p
    return nbrs, weights / weights.sum()


def node2vec_walk(g: MultimodalGraph, v: int, length: int, p: float, q: float,
                  rng: np.random.Generator) -> WalkPath:
    """
    Biased walk starting at v with up to `length` steps: weight 1/p to return,
    1 to stay at distance one from the previous node, 1/q to move away.
    Stops early only at a node without neighbours.
    """
    if length < 1:
        raise ValueError("walk length must be >= 1")
    walk = [int(v)]
    prev = None
    for _ in range(length):
        nbrs, probs = node2vec_transition(g, prev, walk[-1], p, q)
        if nbrs.size == 0:
            break
        nxt = int(nbrs[rng.choice(nbrs.size, p=probs)])
        prev = walk[-1]
        walk.append(nxt)
    return np.asarray(walk, dtype=np.int64)


# -----------------------------
# Temporal walks
# -----------------------------
def _two_hop(g: MultimodalGraph, v: int) -> np.ndarray:
    """v, its neighbours and their neighbours."""
    nbrs = g.neighbors(v)
    a = g.adjacency
    rows = [a.indices[a.indptr[u]:a.indptr[u + 1]] for u in nbrs]
    return np.unique(np.concatenate([[v], nbrs, *rows]).astype(np.int64))


def temporal_rw(g: MultimodalGraph, v: int, window: TimeRange, length: int,
                rng: np.random.Generator, suppress_static_pairs: bool = False,
                max_restarts: int | None = None) -> WalkPath:
    """
    Walk of at most `length` nodes whose timestamped members intersect
    `window`. Static nodes pass through. When the head has no admissible
    neighbour the walk restarts from a uniformly chosen visited node; it ends
    after `max_restarts` (default 10 * length) consecutive failed restarts.

    With suppress_static_pairs, a static node is only admitted when no static
    node already in the walk lies within distance 2 of it (itself included).
    """
    if length < 1:
        raise ValueError("walk length must be >= 1")
    limit = RESTART_FACTOR * length if max_restarts is None else max_restarts
    path = [int(v)]
    near_static = np.zeros(g.num_nodes, dtype=bool) if suppress_static_pairs else None
    if suppress_static_pairs and not g.has_time[v]:
        near_static[_two_hop(g, v)] = True
    head = 0
    failures = 0
    while len(path) < length and failures < limit:
        nbrs = g.neighbors(path[head])
        static = ~g.has_time[nbrs]
        ok = static | g.in_window(nbrs, window)
        if suppress_static_pairs:
            ok &= ~(static & near_static[nbrs])
        admissible = nbrs[ok]
        if admissible.size:
            nxt = int(admissible[rng.integers(admissible.size)])
            path.append(nxt)
            if suppress_static_pairs and not g.has_time[nxt]:
                near_static[_two_hop(g, nxt)] = True
            head = len(path) - 1
            failures = 0
        else:
            failures += 1
            head = int(rng.integers(len(path)))
    return np.asarray(path, dtype=np.int64)


def infer_timestamp(g: MultimodalGraph, v: int, length: int, rng: np.random.Generator) -> float | None:
    """
    Sampling timestamp of v: uniform over its own range, or over the range of
    the first timestamped node reached by an unbounded temporal walk.
    """
    if g.has_time[v]:
        return float(rng.integers(g.t_start[v], g.t_end[v] + 1))
    walk = temporal_rw(g, v, TimeRange.everything(), length, rng)
    for u in walk[1:]:
        if g.has_time[u]:
            return float(rng.integers(g.t_start[u], g.t_end[u] + 1))
    return None


def ballroom_walk(g: MultimodalGraph, v: int, omega: float, n: int, length: int,
                  rng: np.random.Generator) -> list:
    """
    Temporal context of query v.

    1. t_v from v's range, or inferred from the nearest timestamped node
    2. window = [t_v - omega/2, t_v + omega/2]; candidates N(v) = nodes in window
    3. n roots from N(v) (without replacement when |N(v)| >= n)
    4. temporal walks of `length` nodes from every root, pooled
    5. pool permuted and cut into n consecutive paths of `length` nodes

    Returns [] when no timestamp can be inferred or the window is empty.
    """
    if n < 1 or length < 1:
        raise ValueError("ballroom_walk needs n >= 1 and length >= 1")
    t_v = infer_timestamp(g, v, length, rng)
    if t_v is None:
        return []
    window = TimeRange.centered(t_v, omega)
    candidates = g.nodes_in_window(window)
    if candidates.size == 0:
        return []
    roots = rng.choice(candidates, size=n, replace=candidates.size < n)
    suppress = bool(g.has_time[v])
    pool = np.concatenate([
        temporal_rw(g, int(r), window, length, rng, suppress_static_pairs=suppress) for r in roots
    ])
    pool = rng.permutation(pool)
    paths = [pool[i * length:(i + 1) * length] for i in range(n)]
    return [p for p in paths if p.size]


# -----------------------------
# Negatives and batches
# -----------------------------
def negative_sample(g: MultimodalGraph, length: int, rng: np.random.Generator) -> np.ndarray:
    """`length` nodes uniform over V, with replacement."""
    if length < 1:
        raise ValueError("negative sample size must be >= 1")
    return rng.integers(0, g.num_nodes, size=length).astype(np.int64)


@dataclass(frozen=True)
class Batch:
    """Deduplicated node set; query nodes come first and are flagged."""
    nodes: np.ndarray
    is_query: np.ndarray

    def __len__(self) -> int:
        return int(self.nodes.size)

    def positions(self, node_ids) -> np.ndarray:
        """Batch positions of `node_ids` (all must be members)."""
        node_ids = np.asarray(node_ids, dtype=np.int64)
        order = np.argsort(self.nodes, kind="stable")
        idx = np.searchsorted(self.nodes[order], node_ids)
        pos = order[np.clip(idx, 0, len(order) - 1)]
        if node_ids.size and not np.array_equal(self.nodes[pos], node_ids):
            raise KeyError("Some nodes are not members of the batch")
        return pos


def make_batch(pe, pt, pbar, queries=()) -> Batch:
    """Union of topological, temporal and negative contexts (plus queries)."""
    queries = np.asarray(queries, dtype=np.int64).ravel()
    parts = [queries] + [np.asarray(x, dtype=np.int64).ravel() for x in (pe, pt, pbar)]
    allnodes = np.concatenate(parts)
    _, first = np.unique(allnodes, return_index=True)
    nodes = allnodes[np.sort(first)]
    is_query = np.isin(nodes, queries)
    return Batch(nodes=nodes, is_query=is_query)
