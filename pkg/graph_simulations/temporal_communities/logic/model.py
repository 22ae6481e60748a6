# graph_simulations/temporal_communities/logic/model.py

"""
model.py

Primary embedding function, task attention heads and loss terms.

    H0      : initial_features   (projected features / auxiliary rows / zeros)
    H(l+1)  : hetero_conv_layer  (typed attention over the sampled subgraph)
    Z       : embed_primary      (rows of H(L) for the batch)
    Z_task  : task_transform     (Z gated by the per-task sigmoid heads)
    losses  : mm_loss, cluster_loss, combined_loss
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from graph_simulations.temporal_communities.data.constants import (
    FLOAT, INIT_GAIN, TASK_HEAD_INIT_SCALE,
)
from graph_simulations.temporal_communities.data.train_config import TrainConfig
from graph_simulations.temporal_communities.errors import ConfigError, ModelStateError, ShapeError
from graph_simulations.temporal_communities.logic.graph import MultimodalGraph
from graph_simulations.temporal_communities.logic.numeric import (
    Tensor, add, as_tensor, concat, dropout, gelu, hinge_max, l2_norm_sq, matmul, mul,
    parameter, reduce_mean, reshape, row_sum, scale, segment_softmax, segment_sum,
    sigmoid, sub, take_rows,
)
from graph_simulations.temporal_communities.logic.sampling import SampledSubgraph, budget_sample

logger = logging.getLogger(__name__)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, gain: float = INIT_GAIN) -> np.ndarray:
    limit = gain * np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def head_indicator(dim: int, heads: int) -> np.ndarray:
    """dim x heads matrix; column i sums the coordinates owned by head i."""
    if dim % heads:
        raise ConfigError(f"heads ({heads}) must divide dim ({dim})")
    return np.repeat(np.eye(heads), dim // heads, axis=0)


def head_block_mask(dim: int, heads: int) -> np.ndarray:
    ind = head_indicator(dim, heads)
    return ind @ ind.T


# -----------------------------
# Parameters
# -----------------------------
@dataclass
class LayerParams:
    """One convolution layer: per node type Q/K/V/O, per message relation an attention matrix."""
    query: tuple
    key: tuple
    value: tuple
    output: tuple
    relation_att: tuple             # 2R entries: forward r at 2r, reverse r at 2r + 1


@dataclass
class EncoderParams:
    dim: int
    heads: int
    dropout: float
    node_types: tuple
    relation_types: tuple
    input_proj: dict                # type id -> (W [d_type x d], b [1 x d])
    aux: Tensor | None              # auxiliary rows of featureless seen nodes
    aux_rows: dict                  # (type id, local id) -> aux row
    layers: list = field(default_factory=list)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def parameters(self) -> list:
        """(name, Tensor) pairs in a fixed order."""
        out = []
        for t in sorted(self.input_proj):
            w, b = self.input_proj[t]
            out += [(f"input.{t}.W", w), (f"input.{t}.b", b)]
        if self.aux is not None:
            out.append(("aux", self.aux))
        for i, layer in enumerate(self.layers):
            for role in ("query", "key", "value", "output"):
                out += [(f"layer{i}.{role}.{t}", m) for t, m in enumerate(getattr(layer, role))]
            out += [(f"layer{i}.att.{m}", a) for m, a in enumerate(layer.relation_att)]
        return out

    def aux_row(self, type_id: int, local: int) -> int:
        try:
            return self.aux_rows[(int(type_id), int(local))]
        except KeyError:
            raise ModelStateError(
                f"Seen featureless node ({self.node_types[type_id]}, {local}) has no auxiliary row"
            ) from None

    def state_dict(self) -> dict:
        state = {name: t.data.copy() for name, t in self.parameters()}
        keys = sorted(self.aux_rows, key=self.aux_rows.get)
        state["aux_keys"] = np.asarray(keys, dtype=np.int64).reshape(-1, 2)
        return state

    def meta(self) -> dict:
        return {
            "dim": self.dim, "heads": self.heads, "dropout": self.dropout,
            "node_types": list(self.node_types), "relation_types": list(self.relation_types),
            "layers": self.num_layers, "input_types": sorted(self.input_proj),
            "input_widths": [int(self.input_proj[t][0].shape[0]) for t in sorted(self.input_proj)],
        }

    @classmethod
    def from_state(cls, meta: dict, state: dict) -> "EncoderParams":
        dim, n_types, n_rel = meta["dim"], len(meta["node_types"]), len(meta["relation_types"])

        def grab(name):
            if name not in state:
                raise ModelStateError(f"Checkpoint is missing parameter '{name}'")
            return parameter(state[name], name=name)

        input_proj = {t: (grab(f"input.{t}.W"), grab(f"input.{t}.b")) for t in meta["input_types"]}
        layers = []
        for i in range(meta["layers"]):
            roles = {role: tuple(grab(f"layer{i}.{role}.{t}") for t in range(n_types))
                     for role in ("query", "key", "value", "output")}
            att = tuple(grab(f"layer{i}.att.{m}") for m in range(2 * n_rel))
            layers.append(LayerParams(relation_att=att, **roles))
        keys = np.asarray(state.get("aux_keys", np.zeros((0, 2))), dtype=np.int64).reshape(-1, 2)
        aux = grab("aux") if keys.shape[0] else None
        return cls(
            dim=dim, heads=meta["heads"], dropout=meta["dropout"],
            node_types=tuple(meta["node_types"]), relation_types=tuple(meta["relation_types"]),
            input_proj=input_proj, aux=aux,
            aux_rows={(int(t), int(l)): i for i, (t, l) in enumerate(keys)},
            layers=layers,
        )


def init_encoder(g: MultimodalGraph, cfg: TrainConfig, rng: np.random.Generator) -> EncoderParams:
    """
    Fresh parameters for graph g. Auxiliary rows are created for every node
    that is seen but has no features.
    """
    d = cfg.dim
    input_proj = {}
    for t in range(len(g.node_types)):
        nodes = g.nodes_of_type(t)
        width = g.features.width(t)
        if width and g.has_feature[nodes].any():
            input_proj[t] = (
                parameter(glorot(rng, width, d), name=f"input.{t}.W"),
                parameter(np.zeros((1, d)), name=f"input.{t}.b"),
            )

    need_aux = np.flatnonzero(g.is_seen & ~g.has_feature)
    aux_rows = {(int(g.node_type[v]), int(g.local_id(v))): i for i, v in enumerate(need_aux)}
    aux = parameter(rng.normal(0.0, 1.0 / np.sqrt(d), size=(need_aux.size, d)), name="aux") \
        if need_aux.size else None

    n_types, n_msg = len(g.node_types), 2 * len(g.relation_types)
    layers = []
    for _ in range(cfg.layers):
        roles = {role: tuple(parameter(glorot(rng, d, d)) for _ in range(n_types))
                 for role in ("query", "key", "value", "output")}
        att = tuple(parameter(glorot(rng, d, d)) for _ in range(n_msg))
        layers.append(LayerParams(relation_att=att, **roles))

    logger.debug("Encoder: %d input projections, %d auxiliary rows, %d layers",
                 len(input_proj), need_aux.size, cfg.layers)
    return EncoderParams(
        dim=d, heads=cfg.heads, dropout=cfg.embedding_dropout,
        node_types=g.node_types, relation_types=g.relation_types,
        input_proj=input_proj, aux=aux, aux_rows=aux_rows, layers=layers,
    )


# -----------------------------
# Forward pass
# -----------------------------
def _sum(parts: list, n: int, d: int) -> Tensor:
    if not parts:
        return Tensor(np.zeros((n, d)))
    out = parts[0]
    for p in parts[1:]:
        out = add(out, p)
    return out


def initial_features(g: MultimodalGraph, sub: SampledSubgraph, params: EncoderParams,
                     train_mode: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """
    H0 row per subgraph node:
      (i)   Linear(x_v)              when v has features
      (ii)  Dropout(E row of v)      when v is seen but featureless
      (iii) zero vector              otherwise
    """
    n, d = sub.num_nodes, params.dim
    nodes = sub.nodes
    featured = g.has_feature[nodes]
    aux_mask = ~featured & g.is_seen[nodes]
    parts = []

    for t in np.unique(sub.node_type[featured]):
        pos = np.flatnonzero(featured & (sub.node_type == t))
        if int(t) not in params.input_proj:
            raise ModelStateError(f"Node type '{g.node_types[t]}' has features but no input projection")
        w, b = params.input_proj[int(t)]
        x = g.features.matrices[t][g.local_id(nodes[pos])]
        if x.shape[1] != w.shape[0]:
            raise ShapeError("initial_features",
                             f"type '{g.node_types[t]}' features have width {x.shape[1]}, projection expects {w.shape[0]}")
        parts.append(segment_sum(add(matmul(Tensor(x), w), b), pos, n))

    pos = np.flatnonzero(aux_mask)
    if pos.size:
        if params.aux is None:
            raise ModelStateError("Seen featureless nodes present but the encoder has no auxiliary table")
        rows = [params.aux_row(sub.node_type[i], g.local_id(nodes[i])) for i in pos]
        e = dropout(take_rows(params.aux, rows), params.dropout, rng=rng, train=train_mode)
        parts.append(segment_sum(e, pos, n))

    return _sum(parts, n, d)


def _typed_project(h: Tensor, node_type: np.ndarray, mats: tuple, n: int) -> Tensor:
    parts = []
    for t in np.unique(node_type):
        pos = np.flatnonzero(node_type == t)
        parts.append(segment_sum(matmul(take_rows(h, pos), mats[t]), pos, n))
    return _sum(parts, n, h.shape[1])


def hetero_conv_layer(sub: SampledSubgraph, h: Tensor, layer: LayerParams, heads: int) -> Tensor:
    """
    For every target t, attends over its in-subgraph neighbours s:

        logit(s, t, head) = <Q_t(h_t), K_s(h_s) W_rel>_head / sqrt(d / heads)
        h'_t = gelu(h_t + O_t(sum_s softmax_s(logit) * V_s(h_s)))

    Every stored edge s -> t with relation r sends a forward message to t and
    a reverse message to s, each with its own attention matrix.
    """
    n, d = h.shape
    if n != sub.num_nodes:
        raise ShapeError("hetero_conv_layer", f"{n} rows for {sub.num_nodes} subgraph nodes")
    ind = head_indicator(d, heads)
    mask = head_block_mask(d, heads)
    q = _typed_project(h, sub.node_type, layer.query, n)
    k = _typed_project(h, sub.node_type, layer.key, n)
    v = _typed_project(h, sub.node_type, layer.value, n)

    logits, sources, targets = [], [], []
    for r in np.unique(sub.edge_relation):
        sel = sub.edge_relation == r
        s, t = sub.edge_src[sel], sub.edge_dst[sel]
        for m, (src, dst) in ((2 * r, (s, t)), (2 * r + 1, (t, s))):
            k_rel = matmul(take_rows(k, src), mul(layer.relation_att[m], mask))
            logits.append(matmul(mul(take_rows(q, dst), k_rel), ind))
            sources.append(src)
            targets.append(dst)

    if logits:
        targets = np.concatenate(targets)
        att = segment_softmax(scale(concat(logits, axis=0), 1.0 / np.sqrt(d / heads)), targets, n)
        msg = mul(matmul(att, ind.T), take_rows(v, np.concatenate(sources)))
        agg = segment_sum(msg, targets, n)
        h = add(h, _typed_project(agg, sub.node_type, layer.output, n))
    return gelu(h)


def embed_primary(g: MultimodalGraph, batch, params: EncoderParams, cfg: TrainConfig,
                  rng: np.random.Generator, train_mode: bool = False) -> Tensor:
    """Z rows (|batch| x d) in batch order, duplicates included."""
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ValueError("embed_primary needs a nonempty batch")
    sub = budget_sample(g, batch, params.num_layers, cfg.budgets, rng)
    h = initial_features(g, sub, params, train_mode=train_mode, rng=rng)
    for layer in params.layers:
        h = hetero_conv_layer(sub, h, layer, params.heads)
    pos = {int(v): i for i, v in enumerate(sub.nodes[:sub.batch_size])}
    return take_rows(h, [pos[int(v)] for v in batch])


# -----------------------------
# Task heads
# -----------------------------
@dataclass
class TaskHead:
    name: str
    weights: tuple                  # h matrices d x d/h
    biases: tuple                   # h rows 1 x d/h

    def parameters(self) -> list:
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out += [(f"{self.name}.{i}.W", w), (f"{self.name}.{i}.b", b)]
        return out

    def state_dict(self) -> dict:
        return {name: t.data.copy() for name, t in self.parameters()}

    @classmethod
    def from_state(cls, name: str, heads: int, state: dict) -> "TaskHead":
        try:
            w = tuple(parameter(state[f"{name}.{i}.W"]) for i in range(heads))
            b = tuple(parameter(state[f"{name}.{i}.b"]) for i in range(heads))
        except KeyError as e:
            raise ModelStateError(f"Checkpoint is missing task head parameter {e}") from None
        return cls(name=name, weights=w, biases=b)


def init_task_head(name: str, dim: int, heads: int, rng: np.random.Generator) -> TaskHead:
    if dim % heads:
        raise ConfigError(f"heads ({heads}) must divide dim ({dim})")
    width = dim // heads
    return TaskHead(
        name=name,
        weights=tuple(parameter(rng.normal(0.0, TASK_HEAD_INIT_SCALE, size=(dim, width))) for _ in range(heads)),
        biases=tuple(parameter(np.zeros((1, width))) for _ in range(heads)),
    )


def task_transform(z: Tensor, head: TaskHead) -> Tensor:
    """Z * concat_i sigmoid(Z W_i + b_i), elementwise."""
    z = as_tensor(z)
    gate = concat([sigmoid(add(matmul(z, w), b)) for w, b in zip(head.weights, head.biases)], axis=1)
    return mul(z, gate)


# -----------------------------
# Losses
# -----------------------------
def mm_loss_batch(zq: Tensor, z_pos: Tensor, pos_owner, z_neg: Tensor, delta: float) -> Tensor:
    """
    Mean over queries of max_n max(0, <q, n> - mean_p <q, p> + delta).

    pos_owner[i] is the query row of positive i (every query needs at least
    one); z_neg holds the same number of negatives per query, query-major.
    """
    nq = zq.shape[0]
    pos_owner = np.asarray(pos_owner, dtype=np.int64)
    counts = np.bincount(pos_owner, minlength=nq)
    if (counts == 0).any():
        raise ShapeError("mm_loss", "every query needs at least one positive context")
    if z_neg.shape[0] == 0 or z_neg.shape[0] % nq:
        raise ShapeError("mm_loss", f"{z_neg.shape[0]} negatives do not split over {nq} queries")
    per_query = z_neg.shape[0] // nq

    aff_pos = row_sum(mul(take_rows(zq, pos_owner), z_pos))
    mean_pos = mul(segment_sum(aff_pos, pos_owner, nq), (1.0 / counts)[:, None])
    neg_owner = np.repeat(np.arange(nq), per_query)
    aff_neg = reshape(row_sum(mul(take_rows(zq, neg_owner), z_neg)), (nq, per_query))
    margin = add(sub(aff_neg, mean_pos), np.full((1, 1), float(delta)))
    return reduce_mean(hinge_max(margin))


def mm_loss(zq, z_pos, z_neg, delta: float) -> Tensor:
    """Max-margin loss of one query row against its positive and negative rows."""
    zq, z_pos, z_neg = as_tensor(zq), as_tensor(z_pos), as_tensor(z_neg)
    if z_pos.shape[0] == 0 or z_neg.shape[0] == 0:
        raise ShapeError("mm_loss", "positive and negative contexts must be nonempty")
    return mm_loss_batch(zq, z_pos, np.zeros(z_pos.shape[0], dtype=np.int64), z_neg, delta)


def cluster_loss(z: Tensor, means: np.ndarray, assignment) -> Tensor:
    """Mean over rows of ||Z_v - mu_{z_v}||^2; cluster parameters are constants."""
    z = as_tensor(z)
    assignment = np.atleast_1d(np.asarray(assignment, dtype=np.int64))
    means = np.atleast_2d(np.asarray(means, dtype=FLOAT))
    if assignment.size != z.shape[0]:
        raise ShapeError("cluster_loss", f"{assignment.size} assignments for {z.shape[0]} rows")
    if assignment.size and (assignment.min() < 0 or assignment.max() >= means.shape[0]):
        raise ShapeError("cluster_loss", f"assignment outside 0..{means.shape[0] - 1}")
    return reduce_mean(l2_norm_sq(sub(z, means[assignment])))


@dataclass(frozen=True)
class LossWeights:
    beta_e: float = 1.0
    beta_t: float = 1.0
    beta_c: float = 0.01
    delta: float = 0.1

    def __post_init__(self):
        betas = (self.beta_e, self.beta_t, self.beta_c)
        if min(betas) < 0:
            raise ConfigError(f"Loss weights must be non-negative, got {betas}")
        if max(betas) == 0:
            raise ConfigError("At least one of beta_e, beta_t, beta_c must be positive")

    @classmethod
    def from_config(cls, cfg: TrainConfig, with_cluster: bool = True) -> "LossWeights":
        beta_e, beta_t, beta_c = cfg.loss_betas
        return cls(beta_e, beta_t, beta_c if with_cluster else 0.0, cfg.delta)


def combined_loss(le, lt, lc, w: LossWeights) -> Tensor:
    """beta_e * L_E + beta_t * L_T + beta_c * L_C; None terms and zero weights are skipped."""
    terms = [scale(as_tensor(loss), beta)
             for loss, beta in ((le, w.beta_e), (lt, w.beta_t), (lc, w.beta_c))
             if loss is not None and beta != 0]
    if not terms:
        return Tensor(0.0)
    return _sum(terms, 1, 1)
