# graph_simulations/temporal_communities/logic/numeric.py

"""
numeric.py

Dense 2-D tensors with reverse-mode differentiation and an Adam optimizer.

Each op returns a new Tensor that records its parents and a closure that
pushes the upstream gradient into them. Tensor.backward() replays the
closures in reverse topological order, visiting every op once, and then
frees the tape.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from graph_simulations.temporal_communities.data.constants import (
    ADAM_BETA1, ADAM_BETA2, ADAM_EPS, FLOAT, GELU_COEF, SQRT_2_OVER_PI,
)
from graph_simulations.temporal_communities.errors import NonFiniteGradientError, ShapeError

logger = logging.getLogger(__name__)


class Tensor:
    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        data = np.array(data, dtype=FLOAT)
        if data.ndim == 0:
            data = data.reshape(1, 1)
        elif data.ndim == 1:
            data = data.reshape(1, -1)
        elif data.ndim != 2:
            raise ShapeError("tensor", f"expected at most 2 dimensions, got shape {data.shape}")
        self.data = data
        self.requires_grad = requires_grad
        self.name = name
        self.grad: np.ndarray | None = None
        self._prev: tuple = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = ""

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, op={self._op or 'leaf'})"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", f"tensor of shape {self.shape} is not a scalar")
        return float(self.data[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad=None, free_graph: bool = True) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward", f"implicit gradient needs a scalar, got {self.shape}")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=FLOAT).reshape(self.shape)

        topo, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._prev:
                if id(parent) not in visited:
                    stack.append((parent, False))

        grads = {id(self): grad}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._prev:
                _accumulate(node, g)
                continue
            for parent, pg in zip(node._prev, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg
            if free_graph:
                node._prev, node._backward = (), None

    # Operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = np.array(g, dtype=FLOAT, copy=True) if t.grad is None else t.grad + g


def _node(data, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = tuple(parents)
        out._backward = backward
        out._op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, f"cannot broadcast {a.shape} with {b.shape}") from None


# -----------------------------
# Op suite
# -----------------------------
def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", f"inner dimensions differ: {a.shape} @ {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _node(a.data @ b.data, (a, b), backward, "matmul")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return _node(a.data - b.data, (a, b), backward, "sub")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def backward(g):
        return (g * c,)

    return _node(a.data * c, (a,), backward, "scale")


def mul(a, b) -> Tensor:
    """Elementwise product with row/column broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), backward, "mul")


def concat(tensors: Sequence, axis: int = 1) -> Tensor:
    """Side-by-side (axis=1) or stacked (axis=0) concatenation."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat", "nothing to concatenate")
    other = 1 - axis
    if len({t.shape[other] for t in tensors}) != 1:
        raise ShapeError("concat", f"mismatched shapes {[t.shape for t in tensors]} along axis {other}")
    cuts = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def gelu(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    th = np.tanh(SQRT_2_OVER_PI * (x + GELU_COEF * x ** 3))

    def backward(g):
        du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEF * x ** 2)
        return (g * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th ** 2) * du),)

    return _node(0.5 * x * (1.0 + th), (a,), backward, "gelu")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = expit(a.data)

    def backward(g):
        return (g * s * (1.0 - s),)

    return _node(s, (a,), backward, "sigmoid")


def dropout(a, rate: float, rng: np.random.Generator | None = None,
            mask: np.ndarray | None = None, train: bool = True) -> Tensor:
    """Inverted dropout; identity when not training or rate == 0."""
    a = as_tensor(a)
    if not 0.0 <= rate < 1.0:
        raise ShapeError("dropout", f"rate must lie in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return a
    if mask is None:
        if rng is None:
            raise ValueError("dropout in training mode needs an rng or an explicit mask")
        mask = rng.random(a.shape) >= rate
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise ShapeError("dropout", f"mask shape {mask.shape} differs from input {a.shape}")
    keep = mask / (1.0 - rate)

    def backward(g):
        return (g * keep,)

    return _node(a.data * keep, (a,), backward, "dropout")


def reduce_mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size
    if n == 0:
        raise ShapeError("reduce_mean", "mean of an empty tensor")

    def backward(g):
        return (np.full(a.shape, g[0, 0] / n),)

    return _node(np.array([[a.data.mean()]]), (a,), backward, "reduce_mean")


def row_sum(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(a.data.sum(axis=1, keepdims=True), (a,), backward, "row_sum")


def l2_norm_sq(a) -> Tensor:
    """Row-wise squared Euclidean norm, shape (n, 1)."""
    a = as_tensor(a)

    def backward(g):
        return (2.0 * a.data * g,)

    return _node((a.data ** 2).sum(axis=1, keepdims=True), (a,), backward, "l2_norm_sq")


def hinge_max(a) -> Tensor:
    """Row-wise max(0, max_j a_ij), shape (n, 1). Ties go to the first column."""
    a = as_tensor(a)
    if a.shape[1] == 0:
        raise ShapeError("hinge_max", "needs at least one column")
    arg = a.data.argmax(axis=1)
    best = a.data[np.arange(a.shape[0]), arg]
    active = best > 0.0

    def backward(g):
        out = np.zeros(a.shape)
        rows = np.flatnonzero(active)
        out[rows, arg[rows]] = g[rows, 0]
        return (out,)

    return _node(np.maximum(best, 0.0)[:, None], (a,), backward, "hinge_max")


def take_rows(a, idx) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeError("take_rows", f"row index out of range for shape {a.shape}")

    def backward(g):
        out = np.zeros(a.shape)
        np.add.at(out, idx, g)
        return (out,)

    return _node(a.data[idx], (a,), backward, "take_rows")


def segment_sum(a, segments, num_segments: int) -> Tensor:
    """out[s] = sum of rows i with segments[i] == s; also scatters rows into place."""
    a = as_tensor(a)
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape != (a.shape[0],):
        raise ShapeError("segment_sum", f"{segments.shape[0]} segment ids for {a.shape[0]} rows")
    out = np.zeros((num_segments, a.shape[1]))
    np.add.at(out, segments, a.data)

    def backward(g):
        return (g[segments],)

    return _node(out, (a,), backward, "segment_sum")


def segment_softmax(a, segments, num_segments: int) -> Tensor:
    """Softmax over the rows sharing a segment id, independently per column."""
    a = as_tensor(a)
    segments = np.asarray(segments, dtype=np.int64)
    if segments.shape != (a.shape[0],):
        raise ShapeError("segment_softmax", f"{segments.shape[0]} segment ids for {a.shape[0]} rows")
    peak = np.full((num_segments, a.shape[1]), -np.inf)
    np.maximum.at(peak, segments, a.data)
    e = np.exp(a.data - peak[segments])
    total = np.zeros((num_segments, a.shape[1]))
    np.add.at(total, segments, e)
    s = e / total[segments]

    def backward(g):
        dot = np.zeros((num_segments, a.shape[1]))
        np.add.at(dot, segments, s * g)
        return (s * (g - dot[segments]),)

    return _node(s, (a,), backward, "segment_softmax")


def reshape(a, shape: tuple) -> Tensor:
    a = as_tensor(a)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", f"cannot reshape {a.shape} into {shape}") from None
    if data.ndim != 2:
        raise ShapeError("reshape", "result must be 2-D")

    def backward(g):
        return (g.reshape(a.shape),)

    return _node(data, (a,), backward, "reshape")


# -----------------------------
# Optimizer
# -----------------------------
@dataclass
class OptimizerState:
    lr: float
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def to_arrays(self, prefix: str = "adam") -> dict:
        out = {f"{prefix}.step": np.array(self.step), f"{prefix}.lr": np.array(self.lr)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"{prefix}.m.{i}"] = m
            out[f"{prefix}.v.{i}"] = v
        return out

    @classmethod
    def from_arrays(cls, arrays: dict, prefix: str = "adam") -> "OptimizerState":
        count = sum(1 for k in arrays if k.startswith(f"{prefix}.m."))
        return cls(
            lr=float(arrays[f"{prefix}.lr"]),
            step=int(arrays[f"{prefix}.step"]),
            m=[np.array(arrays[f"{prefix}.m.{i}"]) for i in range(count)],
            v=[np.array(arrays[f"{prefix}.v.{i}"]) for i in range(count)],
        )


def optimizer_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray | None],
                   state: OptimizerState, names: Sequence[str] | None = None) -> Sequence[np.ndarray]:
    """One Adam update, in place. Missing gradients count as zero."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ShapeError("optimizer_step", f"{len(state.m)} moment buffers for {len(params)} parameters")
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError("optimizer_step", f"gradient {g.shape} vs parameter {p.shape}")
        if not np.isfinite(g).all():
            label = names[i] if names else f"#{i}"
            bad = int((~np.isfinite(g)).sum())
            raise NonFiniteGradientError(
                f"Non-finite gradient for parameter {label}: {bad} of {g.size} entries"
            )

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1 ** state.step, 1.0 - b2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.zeros_like(p) if g is None else g
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g ** 2
        p -= state.lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + state.eps)
    return params


class Adam:
    def __init__(self, named_params: Sequence[tuple], lr: float, state: OptimizerState | None = None):
        self.names = [n for n, _ in named_params]
        self.params = [t for _, t in named_params]
        self.state = state or OptimizerState(lr=lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        optimizer_step([p.data for p in self.params], [p.grad for p in self.params],
                       self.state, self.names)


# -----------------------------
# Gradient checking
# -----------------------------
def finite_difference_grad(fn: Callable[[], Tensor], tensor: Tensor, h: float = 1e-4) -> np.ndarray:
    """Central differences of the scalar fn() w.r.t. every entry of tensor."""
    grad = np.zeros_like(tensor.data)
    it = np.nditer(tensor.data, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = tensor.data[i]
        tensor.data[i] = orig + h
        up = fn().item()
        tensor.data[i] = orig - h
        down = fn().item()
        tensor.data[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return grad
