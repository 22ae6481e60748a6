# tests/conftest.py

import numpy as np
import pytest

from graph_simulations.temporal_communities.data.train_config import TrainConfig
from graph_simulations.temporal_communities.logic.graph import EdgeSpec, NodeSpec, build_graph
from graph_simulations.temporal_communities.logic.synthetic import SyntheticSpec, gen_synthetic


def homogeneous(n, edges, times=None, features=None, seen=None):
    """One node type 'node', one relation 'link'; times is a list of (start, end) or None per node."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    specs = [EdgeSpec("link", "node", "node", edges[:, 0], edges[:, 1])] if edges.size else []
    time_ranges = None
    if times is not None:
        present = np.array([t is not None for t in times])
        starts = np.array([t[0] if t is not None else 0 for t in times])
        ends = np.array([t[1] if t is not None else 0 for t in times])
        time_ranges = {"node": (starts, ends, present)}
    feats = {"node": (features, None)} if features is not None else None
    masks = {"node": np.asarray(seen, dtype=bool)} if seen is not None else None
    return build_graph([NodeSpec("node", n)], specs, features=feats, time_ranges=time_ranges, is_seen=masks)


@pytest.fixture
def make_graph():
    return homogeneous


@pytest.fixture
def path_graph():
    # a - b - c
    return homogeneous(3, [(0, 1), (1, 2)])


@pytest.fixture
def two_triangles():
    return homogeneous(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])


@pytest.fixture
def typed_graph():
    """
    authors (3, features of width 2) write papers (2, featureless); one
    paper cites the other. Author 2 and paper 1 carry time ranges.
    """
    writes = EdgeSpec("writes", "author", "paper", np.array([0, 1, 2, 2]), np.array([0, 0, 1, 0]))
    cites = EdgeSpec("cites", "paper", "paper", np.array([1]), np.array([0]))
    return build_graph(
        [NodeSpec("author", 3), NodeSpec("paper", 2)],
        [writes, cites],
        features={"author": (np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), None)},
        time_ranges={
            "author": (np.array([0, 0, 4]), np.array([0, 0, 6]), np.array([False, False, True])),
            "paper": (np.array([0, 5]), np.array([0, 5]), np.array([False, True])),
        },
    )


@pytest.fixture
def timed_ring():
    """8-node cycle, node i active during tick i."""
    n = 8
    return homogeneous(n, [(i, (i + 1) % n) for i in range(n)], times=[(i, i) for i in range(n)])


@pytest.fixture
def small_config():
    return TrainConfig(
        dim=8, layers=1, budgets=(4,), heads=2, walks_per_node=2, walk_length=4,
        omega_partitions=4, k_init=2, epochs=2, cluster_steps=5, pretrain_epochs=2,
        batch_size=16, seed=3,
    )


@pytest.fixture
def synthetic_dataset():
    spec = SyntheticSpec(
        node_types=(("node", 30),), blocks=2, p_in=0.4, p_out=0.02,
        time_bins=3, feature_dim=4, missing_features=0.2,
    )
    return gen_synthetic(spec, seed=7)
