# graph_simulations/temporal_communities/data/train_config.py

"""
train_config.py

Registry of every training hyperparameter with its CLI flag, allowed range and
default, plus the frozen TrainConfig record built from it.

Effective values are layered: registry defaults -> JSON params file -> CLI flags.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from graph_simulations.temporal_communities.errors import ConfigError

VARIANTS = ("full", "topological", "temporal")

train_config = {
    # I. Encoder
    "dim": {
        "label": "Representation dimension d",
        "flag": "dim",
        "type": int,
        "min": 2,
        "max": 4096,
        "default": 64,
    },
    "layers": {
        "label": "Heterogeneous convolution layers L",
        "flag": "layers",
        "type": int,
        "min": 0,
        "max": 8,
        "default": 2,
    },
    "budgets": {
        "label": "Per-layer neighbour budget multiples (comma separated)",
        "flag": "budgets",
        "type": tuple,
        "min": 1,
        "max": 1024,
        "default": (8, 4),
    },
    "heads": {
        "label": "Attention heads h (conv layers and task heads)",
        "flag": "heads",
        "type": int,
        "min": 1,
        "max": 64,
        "default": 4,
    },
    "embedding_dropout": {
        "label": "Dropout rate on auxiliary embedding rows",
        "flag": "embedding-dropout",
        "type": float,
        "min": 0.0,
        "max": 0.95,
        "default": 0.5,
    },

    # II. Context sampling
    "walks_per_node": {
        "label": "Walks per node n (ballroom roots)",
        "flag": "walks-per-node",
        "type": int,
        "min": 1,
        "max": 1000,
        "default": 10,
    },
    "walk_length": {
        "label": "Walk length l",
        "flag": "walk-length",
        "type": int,
        "min": 1,
        "max": 1000,
        "default": 10,
    },
    "p": {
        "label": "Node2Vec return parameter p",
        "flag": "p",
        "type": float,
        "min": 1e-6,
        "max": 1e6,
        "default": 1.0,
    },
    "q": {
        "label": "Node2Vec in-out parameter q",
        "flag": "q",
        "type": float,
        "min": 1e-6,
        "max": 1e6,
        "default": 0.5,
    },
    "omega_partitions": {
        "label": "Temporal window = time span / partitions",
        "flag": "omega-partitions",
        "type": int,
        "min": 1,
        "max": 100000,
        "default": 20,
    },

    # III. Objective
    "delta": {
        "label": "Max-margin Delta",
        "flag": "delta",
        "type": float,
        "min": 0.0,
        "max": 100.0,
        "default": 0.1,
    },
    "beta_e": {
        "label": "Topological loss weight",
        "flag": "beta-e",
        "type": float,
        "min": 0.0,
        "max": 1000.0,
        "default": 1.0,
    },
    "beta_t": {
        "label": "Temporal loss weight",
        "flag": "beta-t",
        "type": float,
        "min": 0.0,
        "max": 1000.0,
        "default": 1.0,
    },
    "beta_c": {
        "label": "Cluster loss weight",
        "flag": "beta-c",
        "type": float,
        "min": 0.0,
        "max": 1000.0,
        "default": 0.01,
    },

    # IV. Clustering prior
    "alpha": {
        "label": "Dirichlet concentration alpha",
        "flag": "alpha",
        "type": float,
        "min": 1e-6,
        "max": 1e6,
        "default": 10.0,
    },
    "kappa": {
        "label": "Normal-Wishart mean scaling kappa",
        "flag": "kappa",
        "type": float,
        "min": 1e-9,
        "max": 1e9,
        "default": 1.0,
    },
    "nu_offset": {
        "label": "Degrees of freedom offset (nu = d + offset)",
        "flag": "nu-offset",
        "type": float,
        "min": 1.0,
        "max": 1e6,
        "default": 1.0,
    },
    "sigma_scale": {
        "label": "Prior covariance scale of the data covariance",
        "flag": "sigma-scale",
        "type": float,
        "min": 1e-9,
        "max": 1e3,
        "default": 0.05,
    },
    "k_init": {
        "label": "Initial K for k-means",
        "flag": "k-init",
        "type": int,
        "min": 1,
        "max": 10000,
        "default": 2,
    },

    # V. Schedule
    "epochs": {
        "label": "Outer iterations I",
        "flag": "epochs",
        "type": int,
        "min": 0,
        "max": 100000,
        "default": 5,
    },
    "cluster_steps": {
        "label": "Clustering steps per cycle I_c",
        "flag": "cluster-steps",
        "type": int,
        "min": 1,
        "max": 100000,
        "default": 20,
    },
    "pretrain_epochs": {
        "label": "Pretraining epochs",
        "flag": "pretrain-epochs",
        "type": int,
        "min": 0,
        "max": 100000,
        "default": 10,
    },
    "learning_rate": {
        "label": "Adam learning rate",
        "flag": "learning-rate",
        "type": float,
        "min": 1e-9,
        "max": 10.0,
        "default": 0.01,
    },
    "batch_size": {
        "label": "Query nodes per minibatch",
        "flag": "batch-size",
        "type": int,
        "min": 1,
        "max": 1000000,
        "default": 128,
    },
    "seed": {
        "label": "Random seed",
        "flag": "seed",
        "type": int,
        "min": 0,
        "max": 2**32 - 1,
        "default": 0,
    },
}

# Variant switch (string option with fixed choices)
variant_config = {
    "variant": {
        "label": "Objective variant",
        "flag": "variant",
        "options": list(VARIANTS),
        "default": "full",
    },
}


def default_values() -> dict:
    values = {k: meta["default"] for k, meta in train_config.items()}
    values.update({k: meta["default"] for k, meta in variant_config.items()})
    return values


def _coerce(key: str, raw: Any) -> Any:
    meta = train_config[key]
    kind = meta["type"]
    try:
        if kind is tuple:
            if isinstance(raw, str):
                items = [s for s in raw.replace(" ", "").split(",") if s]
            else:
                items = list(raw) if isinstance(raw, (list, tuple)) else [raw]
            value = tuple(int(v) for v in items)
            if not value:
                raise ValueError("empty list")
            bad = [v for v in value if not meta["min"] <= v <= meta["max"]]
        else:
            if kind is int and isinstance(raw, float) and not raw.is_integer():
                raise ValueError("expected an integer")
            value = kind(raw)
            bad = [] if meta["min"] <= value <= meta["max"] else [value]
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid value for {key}: {raw!r} ({e})") from e
    if bad:
        raise ConfigError(
            f"Value for {key} out of range [{meta['min']}, {meta['max']}]: {raw!r}"
        )
    return value


def validate_values(values: Mapping[str, Any]) -> dict:
    """Checks keys and ranges; returns a coerced copy."""
    out = {}
    for k, v in values.items():
        if k in train_config:
            out[k] = _coerce(k, v)
        elif k in variant_config:
            if v not in variant_config[k]["options"]:
                raise ConfigError(
                    f"Invalid value for {k}: {v!r}; expected one of {variant_config[k]['options']}"
                )
            out[k] = v
        else:
            raise ConfigError(f"Unknown configuration key '{k}'")
    return out


def build_train_values(cli_values: Mapping[str, Any] | None = None,
                       params_file: Mapping[str, Any] | None = None) -> dict:
    """
    Layers defaults, a params-file dict and explicit CLI values.
    CLI entries that are None are treated as "not given".
    """
    values = default_values()
    if params_file:
        values.update(validate_values(params_file))
    if cli_values:
        given = {k: v for k, v in cli_values.items() if v is not None}
        values.update(validate_values(given))
    return validate_values(values)


def load_params_file(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ConfigError("params-file must contain a JSON object of key: value pairs.")
    return data


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 64
    layers: int = 2
    budgets: tuple = (8, 4)
    heads: int = 4
    embedding_dropout: float = 0.5
    walks_per_node: int = 10
    walk_length: int = 10
    p: float = 1.0
    q: float = 0.5
    omega_partitions: int = 20
    delta: float = 0.1
    beta_e: float = 1.0
    beta_t: float = 1.0
    beta_c: float = 0.01
    alpha: float = 10.0
    kappa: float = 1.0
    nu_offset: float = 1.0
    sigma_scale: float = 0.05
    k_init: int = 2
    epochs: int = 5
    cluster_steps: int = 20
    pretrain_epochs: int = 10
    learning_rate: float = 0.01
    batch_size: int = 128
    seed: int = 0
    variant: str = "full"

    def __post_init__(self):
        validate_values(dataclasses.asdict(self))
        if self.dim % self.heads != 0:
            raise ConfigError(f"heads ({self.heads}) must divide dim ({self.dim})")

    @classmethod
    def from_values(cls, values: Mapping[str, Any]) -> "TrainConfig":
        return cls(**validate_values(values))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["budgets"] = list(self.budgets)
        return d

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    @property
    def loss_betas(self) -> tuple:
        """(beta_e, beta_t, beta_c) after applying the variant switch."""
        beta_e, beta_t = self.beta_e, self.beta_t
        if self.variant == "topological":
            beta_t = 0.0
        elif self.variant == "temporal":
            beta_e = 0.0
        return beta_e, beta_t, self.beta_c


@dataclass
class RunConfig:
    """Everything one CLI invocation needs besides the training hyperparameters."""
    command: str
    dataset: str | None = None
    out: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    flags: dict = field(default_factory=dict)

    def echo(self) -> dict:
        return {
            "command": self.command,
            "dataset": self.dataset,
            "out": self.out,
            "train": self.train.to_dict(),
            "flags": self.flags,
        }

    def write_echo(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.echo(), f, indent=2, sort_keys=True)
            f.write("\n")
