# graph_simulations/temporal_communities/logic/pipeline.py

"""
pipeline.py

Alternating optimisation of the encoder and the cluster model.

    pretrain : representation loss only (beta_c = 0) until the epoch budget
               runs out or the loss plateaus
    train    : per outer iteration, one epoch over every seen query node
               with theta frozen, then clustering steps on a fresh embedding
               snapshot with the encoder frozen
    infer    : frozen-parameter embeddings for unseen nodes

Every random draw comes from derive_rng(seed, stream, epoch, node), so a run
is a deterministic function of (graph, config). Contexts are sampled serially
in query order.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from graph_simulations.temporal_communities.data.constants import (
    EMBED_BATCH_SIZE, PLATEAU_PATIENCE, PLATEAU_RTOL,
)
from graph_simulations.temporal_communities.data.train_config import TrainConfig
from graph_simulations.temporal_communities.errors import ModelStateError
from graph_simulations.temporal_communities.logic.clustering import (
    ClusterState, NWPrior, assign, kmeans_init, run_clustering,
)
from graph_simulations.temporal_communities.logic.evaluation import lp_accuracy
from graph_simulations.temporal_communities.logic.graph import MultimodalGraph
from graph_simulations.temporal_communities.logic.model import (
    EncoderParams, LossWeights, TaskHead, cluster_loss, combined_loss, embed_primary,
    init_encoder, init_task_head, mm_loss_batch, task_transform,
)
from graph_simulations.temporal_communities.logic.numeric import Adam, OptimizerState, take_rows
from graph_simulations.temporal_communities.logic.sampling import (
    ballroom_walk, derive_rng, make_batch, negative_sample, node2vec_walk,
)

logger = logging.getLogger(__name__)

# rng streams
STREAM_INIT = 0
STREAM_TOPO = 1
STREAM_TEMPORAL = 2
STREAM_NEGATIVE = 3
STREAM_SHUFFLE = 4
STREAM_STEP = 5
STREAM_EMBED = 6
STREAM_CLUSTER = 7
STREAM_HOLDOUT = 8

TASKS = ("topological", "temporal")
CHECKPOINT_ARRAYS = "checkpoint.npz"
CHECKPOINT_META = "checkpoint.json"


@dataclass
class TrainState:
    params: EncoderParams
    heads: dict
    optimizer: OptimizerState
    epoch: int = 0
    clusters: ClusterState | None = None
    cluster_nodes: np.ndarray | None = None
    history: list = field(default_factory=list)     # one row per epoch
    cycles: list = field(default_factory=list)      # one row per outer iteration

    def named_parameters(self) -> list:
        out = list(self.params.parameters())
        for name in TASKS:
            out += self.heads[name].parameters()
        return out


@dataclass
class QueryContext:
    query: int
    topological: np.ndarray
    temporal: np.ndarray
    negatives: np.ndarray


@dataclass
class TrainResult:
    embeddings: np.ndarray
    clusters: ClusterState
    state: TrainState

    @property
    def assignments(self) -> np.ndarray:
        """Cluster of every node under the final parameters."""
        return assign(self.embeddings, self.clusters)


def init_state(g: MultimodalGraph, cfg: TrainConfig) -> TrainState:
    rng = derive_rng(cfg.seed, STREAM_INIT)
    params = init_encoder(g, cfg, rng)
    heads = {name: init_task_head(name, cfg.dim, cfg.heads, rng) for name in TASKS}
    return TrainState(params=params, heads=heads, optimizer=OptimizerState(lr=cfg.learning_rate))


def temporal_window(g: MultimodalGraph, cfg: TrainConfig) -> float | None:
    """omega = time span / omega_partitions; None when nothing is timestamped."""
    span = g.time_span()
    if span is None:
        return None
    return (span.end - span.start) / cfg.omega_partitions


# -----------------------------
# Contexts and steps
# -----------------------------
def sample_contexts(g: MultimodalGraph, v: int, cfg: TrainConfig, epoch: int,
                    omega: float | None) -> QueryContext:
    """
    Contexts of query v: walks_per_node Node2Vec walks and the walks_per_node
    ballroom paths, each flattened into one positive set, plus negatives.
    """
    beta_e, beta_t, _ = cfg.loss_betas
    empty = np.zeros(0, dtype=np.int64)
    pe = pt = empty
    if beta_e > 0:
        rng = derive_rng(cfg.seed, STREAM_TOPO, epoch, v)
        pe = np.concatenate([
            node2vec_walk(g, v, cfg.walk_length, cfg.p, cfg.q, rng)[1:] for _ in range(cfg.walks_per_node)
        ])
    if beta_t > 0 and omega is not None:
        paths = ballroom_walk(g, v, omega, cfg.walks_per_node, cfg.walk_length,
                              derive_rng(cfg.seed, STREAM_TEMPORAL, epoch, v))
        pt = np.concatenate(paths) if paths else empty
    neg = negative_sample(g, cfg.walk_length, derive_rng(cfg.seed, STREAM_NEGATIVE, epoch, v))
    return QueryContext(int(v), pe, pt, neg)


def _task_loss(zt, batch, contexts, attr: str, delta: float):
    chosen = [c for c in contexts if getattr(c, attr).size]
    if not chosen:
        return None
    queries = batch.positions([c.query for c in chosen])
    pos = np.concatenate([getattr(c, attr) for c in chosen])
    owner = np.repeat(np.arange(len(chosen)), [getattr(c, attr).size for c in chosen])
    neg = np.concatenate([c.negatives for c in chosen])
    return mm_loss_batch(
        take_rows(zt, queries), take_rows(zt, batch.positions(pos)), owner,
        take_rows(zt, batch.positions(neg)), delta,
    )


def train_step(g: MultimodalGraph, contexts: list, state: TrainState, cfg: TrainConfig,
               weights: LossWeights, rng: np.random.Generator,
               cluster_map: np.ndarray | None = None) -> dict:
    """
    One optimizer step over a minibatch of query contexts. Query nodes and
    negatives are shared by both tasks; L_C uses the primary embedding.
    """
    queries = np.array([c.query for c in contexts], dtype=np.int64)
    batch = make_batch(
        np.concatenate([c.topological for c in contexts]),
        np.concatenate([c.temporal for c in contexts]),
        np.concatenate([c.negatives for c in contexts]),
        queries,
    )
    z = embed_primary(g, batch.nodes, state.params, cfg, rng, train_mode=True)

    le = lt = lc = None
    if weights.beta_e > 0:
        le = _task_loss(task_transform(z, state.heads["topological"]), batch, contexts, "topological", weights.delta)
    if weights.beta_t > 0:
        lt = _task_loss(task_transform(z, state.heads["temporal"]), batch, contexts, "temporal", weights.delta)
    if weights.beta_c > 0 and cluster_map is not None and state.clusters is not None:
        qpos = batch.positions(queries)
        lc = cluster_loss(take_rows(z, qpos), state.clusters.means, cluster_map[queries])

    loss = combined_loss(le, lt, lc, weights)
    if loss.requires_grad:
        opt = Adam(state.named_parameters(), cfg.learning_rate, state=state.optimizer)
        opt.zero_grad()
        loss.backward()
        opt.step()
    return {
        "loss": loss.item(),
        "loss_e": None if le is None else le.item(),
        "loss_t": None if lt is None else lt.item(),
        "loss_c": None if lc is None else lc.item(),
    }


def _mean(rows: list, key: str) -> float:
    vals = [r[key] for r in rows if r[key] is not None]
    return float(np.mean(vals)) if vals else float("nan")


def run_epoch(g: MultimodalGraph, state: TrainState, cfg: TrainConfig, weights: LossWeights,
              cluster_map: np.ndarray | None = None, progress: bool = False) -> dict:
    """Every seen node is a query once, in shuffled minibatches of cfg.batch_size."""
    epoch = state.epoch
    omega = temporal_window(g, cfg)
    queries = np.flatnonzero(g.is_seen)
    if queries.size == 0:
        raise ModelStateError("No seen nodes to train on")
    queries = derive_rng(cfg.seed, STREAM_SHUFFLE, epoch).permutation(queries)
    step_rng = derive_rng(cfg.seed, STREAM_STEP, epoch)
    rows = []
    starts = range(0, queries.size, cfg.batch_size)
    for start in tqdm(starts, desc=f"epoch {epoch}", disable=not progress, leave=False):
        chunk = queries[start:start + cfg.batch_size]
        contexts = [sample_contexts(g, int(v), cfg, epoch, omega) for v in chunk]
        rows.append(train_step(g, contexts, state, cfg, weights, step_rng, cluster_map))
    summary = {"epoch": epoch, **{k: _mean(rows, k) for k in ("loss", "loss_e", "loss_t", "loss_c")}}
    state.history.append(summary)
    state.epoch += 1
    logger.info("Epoch %d: loss=%.5f (E=%.5f T=%.5f C=%.5f)", epoch, summary["loss"],
                summary["loss_e"], summary["loss_t"], summary["loss_c"])
    return summary


# -----------------------------
# Embedding snapshots
# -----------------------------
def embed_all(g: MultimodalGraph, params: EncoderParams, cfg: TrainConfig, nodes=None,
              batch_size: int = EMBED_BATCH_SIZE, progress: bool = False) -> np.ndarray:
    """Eval-mode embeddings of `nodes` (default: every node), row i for nodes[i]."""
    nodes = np.arange(g.num_nodes) if nodes is None else np.asarray(nodes, dtype=np.int64)
    out = np.zeros((nodes.size, params.dim))
    starts = list(range(0, nodes.size, batch_size))
    for i, start in enumerate(tqdm(starts, desc="embed", disable=not progress, leave=False)):
        chunk = nodes[start:start + batch_size]
        rng = derive_rng(cfg.seed, STREAM_EMBED, i)
        out[start:start + chunk.size] = embed_primary(g, chunk, params, cfg, rng, train_mode=False).data
    return out


def infer(g_extended: MultimodalGraph, params: EncoderParams, new_nodes, cfg: TrainConfig) -> np.ndarray:
    """Embeddings of previously unseen nodes with frozen parameters."""
    new_nodes = np.asarray(new_nodes, dtype=np.int64)
    seen = new_nodes[g_extended.is_seen[new_nodes]]
    if seen.size:
        logger.warning("%d of the inferred nodes are flagged as seen", seen.size)
    return embed_all(g_extended, params, cfg, nodes=new_nodes)


def align_to_encoder(g: MultimodalGraph, params: EncoderParams) -> MultimodalGraph:
    """
    Marks seen featureless nodes that own no auxiliary row as unseen, so a
    graph grown after training can be embedded with frozen parameters.
    """
    cand = np.flatnonzero(g.is_seen & ~g.has_feature)
    local = g.local_id(cand)
    missing = [v for v, t, i in zip(cand, g.node_type[cand], local)
               if (int(t), int(i)) not in params.aux_rows]
    if not missing:
        return g
    logger.warning("%d featureless nodes are unknown to the encoder; embedding them as unseen", len(missing))
    seen = g.is_seen.copy()
    seen[np.asarray(missing, dtype=np.int64)] = False
    return g.with_masks(is_seen=seen)


# -----------------------------
# Training phases
# -----------------------------
def _plateaued(totals: list) -> bool:
    if len(totals) <= PLATEAU_PATIENCE:
        return False
    recent = totals[-(PLATEAU_PATIENCE + 1):]
    gains = [(a - b) / max(abs(a), 1e-12) for a, b in zip(recent[:-1], recent[1:])]
    return all(gain < PLATEAU_RTOL for gain in gains)


def pretrain(g: MultimodalGraph, cfg: TrainConfig, state: TrainState | None = None,
             progress: bool = False) -> TrainState:
    """Representation-only epochs (beta_c = 0); stops early on a loss plateau."""
    state = state or init_state(g, cfg)
    if cfg.pretrain_epochs == 0:
        return state
    weights = LossWeights.from_config(cfg, with_cluster=False)
    totals = []
    for _ in tqdm(range(cfg.pretrain_epochs), desc="pretrain", disable=not progress):
        totals.append(run_epoch(g, state, cfg, weights)["loss"])
        if _plateaued(totals):
            logger.info("Pretraining plateaued after %d epochs", len(totals))
            break
    return state


def _cluster_map(g: MultimodalGraph, state: TrainState) -> np.ndarray:
    out = np.full(g.num_nodes, -1, dtype=np.int64)
    out[state.cluster_nodes] = state.clusters.z
    return out


def train(g: MultimodalGraph, cfg: TrainConfig, state: TrainState | None = None,
          valid_split=None, progress: bool = False) -> TrainResult:
    """
    Pretraining (unless a state is given), then cfg.epochs outer iterations.
    The first cycle initialises theta with k-means; L_C joins the loss from
    the second iteration on. With epochs == 0 the result holds the
    pretrained encoder and a k-means-only clustering.
    """
    if state is None:
        state = pretrain(g, cfg, progress=progress)
    weights = LossWeights.from_config(cfg)
    nodes = np.flatnonzero(g.is_seen)

    if cfg.epochs == 0 and state.clusters is None:
        z = embed_all(g, state.params, cfg, nodes=nodes)
        state.clusters = kmeans_init(z, min(cfg.k_init, nodes.size), derive_rng(cfg.seed, STREAM_CLUSTER, 0))
        state.cluster_nodes = nodes

    for i in tqdm(range(cfg.epochs), desc="train", disable=not progress):
        cmap = _cluster_map(g, state) if state.clusters is not None else None
        losses = run_epoch(g, state, cfg, weights, cluster_map=cmap)

        z = embed_all(g, state.params, cfg, nodes=nodes)
        prior = NWPrior.from_data(z, cfg)
        restart = state.clusters is not None
        state.clusters = run_clustering(
            z, prior, cfg.cluster_steps, derive_rng(cfg.seed, STREAM_CLUSTER, len(state.cycles)),
            state=state.clusters, k_init=cfg.k_init, restart=restart,
        )
        state.cluster_nodes = nodes

        cycle = {
            "cycle": len(state.cycles), "epoch": losses["epoch"], "loss": losses["loss"],
            "K": state.clusters.K, "phase": state.clusters.phase.value,
            "lower_bound": state.clusters.trace[-1] if state.clusters.trace else float("nan"),
        }
        if valid_split is not None:
            full = embed_all(g, state.params, cfg)
            cycle["valid_lp"] = lp_accuracy(full, valid_split, derive_rng(cfg.seed, STREAM_CLUSTER, i), use="valid")
            logger.info("Cycle %d: K=%d validation LP_ACC=%.4f", i, state.clusters.K, cycle["valid_lp"])
        else:
            logger.info("Cycle %d: K=%d", i, state.clusters.K)
        state.cycles.append(cycle)

    return TrainResult(embeddings=embed_all(g, state.params, cfg), clusters=state.clusters, state=state)


# -----------------------------
# Inductive protocol
# -----------------------------
@dataclass
class Holdout:
    train_graph: MultimodalGraph        # held-out nodes unseen and edge-free
    full_graph: MultimodalGraph         # all edges back, held-out nodes still unseen
    nodes: np.ndarray


def holdout_nodes(g: MultimodalGraph, fraction: float, seed: int) -> Holdout:
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"holdout fraction must lie in [0, 1), got {fraction}")
    rng = derive_rng(seed, STREAM_HOLDOUT)
    count = int(round(fraction * g.num_nodes))
    held = np.sort(rng.choice(g.num_nodes, size=count, replace=False)).astype(np.int64)
    seen = g.is_seen.copy()
    seen[held] = False
    full = g.with_masks(is_seen=seen)
    return Holdout(train_graph=full.without_edges_of(held), full_graph=full, nodes=held)


# -----------------------------
# Checkpoints
# -----------------------------
def parameter_digest(state: TrainState) -> str:
    h = hashlib.sha256()
    for name, t in state.named_parameters():
        h.update(name.encode())
        h.update(np.ascontiguousarray(t.data).tobytes())
    return h.hexdigest()


def save_checkpoint(directory: str, state: TrainState, cfg: TrainConfig) -> str:
    os.makedirs(directory, exist_ok=True)
    arrays = {f"encoder.{k}": v for k, v in state.params.state_dict().items()}
    for name in TASKS:
        arrays.update({f"head.{k}": v for k, v in state.heads[name].state_dict().items()})
    arrays.update(state.optimizer.to_arrays())
    if state.clusters is not None:
        arrays.update(state.clusters.to_arrays())
        arrays["cluster.nodes"] = state.cluster_nodes
    path = os.path.join(directory, CHECKPOINT_ARRAYS)
    np.savez_compressed(path, **arrays)
    meta = {
        "encoder": state.params.meta(),
        "config": cfg.to_dict(),
        "epoch": state.epoch,
        "history": state.history,
        "cycles": state.cycles,
        "digest": parameter_digest(state),
    }
    with open(os.path.join(directory, CHECKPOINT_META), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True, default=float)
        f.write("\n")
    logger.info("Checkpoint written to %s", directory)
    return path


def load_checkpoint(directory: str) -> tuple:
    """(TrainState, TrainConfig) exactly as saved."""
    with open(os.path.join(directory, CHECKPOINT_META), "r", encoding="utf-8") as f:
        meta = json.load(f)
    with np.load(os.path.join(directory, CHECKPOINT_ARRAYS)) as data:
        arrays = {k: data[k] for k in data.files}
    cfg = TrainConfig.from_values(meta["config"])

    def strip(prefix):
        return {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}

    params = EncoderParams.from_state(meta["encoder"], strip("encoder."))
    head_state = strip("head.")
    heads = {name: TaskHead.from_state(name, cfg.heads, head_state) for name in TASKS}
    clusters = ClusterState.from_arrays(arrays) if "cluster.means" in arrays else None
    state = TrainState(
        params=params, heads=heads, optimizer=OptimizerState.from_arrays(arrays),
        epoch=int(meta["epoch"]), clusters=clusters,
        cluster_nodes=arrays.get("cluster.nodes"), history=meta["history"], cycles=meta["cycles"],
    )
    if parameter_digest(state) != meta["digest"]:
        raise ModelStateError(f"Checkpoint digest mismatch in {directory}")
    return state, cfg
