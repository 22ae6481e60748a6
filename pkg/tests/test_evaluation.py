import numpy as np
import pytest

from graph_simulations.temporal_communities.errors import EvaluationError
from graph_simulations.temporal_communities.logic.evaluation import (
    EdgeSplit,
    LabelKind,
    LabelSet,
    cf_accuracy,
    evaluate_run,
    louvain_labels,
    lp_accuracy,
    modularity,
    nmi,
    split_edges,
    temporal_labels,
)
from graph_simulations.temporal_communities.logic.graph import EdgeSpec, NodeSpec, build_graph

REPORT_ROWS = {
    "LP_ACC", "CF_ACC L_y", "CF_ACC L_T",
    "COM_NMI L_y", "COM_NMI L_T", "COM_NMI L_G", "Modularity",
}


def random_graph(make_graph, n, m, seed):
    rng = np.random.default_rng(seed)
    edges = set()
    while len(edges) < m:
        u, v = rng.integers(0, n, size=2)
        if u != v:
            edges.add((min(u, v), max(u, v)))
    return make_graph(n, sorted(edges))


# -----------------------------
# Edge split
# -----------------------------
def test_split_sizes_and_disjointness(make_graph):
    g = random_graph(make_graph, 200, 1000, seed=0)
    split = split_edges(g, (0.8, 0.1, 0.1), seed=4)
    assert (split.train.shape[0], split.valid.shape[0], split.test.shape[0]) == (800, 100, 100)
    keys = [set(map(tuple, split.pairs(p)[0].tolist())) for p in ("train", "valid", "test")]
    assert not (keys[0] & keys[1]) and not (keys[0] & keys[2]) and not (keys[1] & keys[2])
    for part in ("train", "valid", "test"):
        pos, neg = split.pairs(part)
        assert neg.shape == pos.shape
        assert np.all(neg[:, 0] != neg[:, 1])
        assert not np.asarray(g.adjacency[neg[:, 0], neg[:, 1]]).any()


def test_split_everything_to_train(path_graph):
    split = split_edges(path_graph, (1.0, 0.0, 0.0), seed=0)
    assert split.train.shape[0] == 2
    assert split.valid.shape[0] == split.test.shape[0] == 0


def test_split_ratio_validation(path_graph):
    with pytest.raises(ValueError):
        split_edges(path_graph, (0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        split_edges(path_graph, (1.2, -0.1, -0.1))
    with pytest.raises(ValueError):
        split_edges(path_graph, (1.0, 0.0))


def test_split_is_deterministic(make_graph):
    g = random_graph(make_graph, 50, 120, seed=1)
    a, b = split_edges(g, seed=9), split_edges(g, seed=9)
    np.testing.assert_array_equal(a.test, b.test)
    np.testing.assert_array_equal(a.test_neg, b.test_neg)


def keys(pairs):
    return set(map(tuple, np.sort(pairs, axis=1).tolist()))


def test_parallel_edges_stay_in_one_part():
    rng = np.random.default_rng(2)
    pairs = set()
    while len(pairs) < 60:
        u, v = rng.integers(0, 40, size=2)
        if u != v:
            pairs.add((min(u, v), max(u, v)))
    pairs = np.array(sorted(pairs))
    # every pair carries a "cites" edge; half of them also a reversed "mentions" edge
    g = build_graph(
        [NodeSpec("doc", 40)],
        [
            EdgeSpec("cites", "doc", "doc", pairs[:, 0], pairs[:, 1]),
            EdgeSpec("mentions", "doc", "doc", pairs[::2, 1], pairs[::2, 0]),
        ],
    )
    for seed in range(5):
        split = split_edges(g, (0.6, 0.2, 0.2), seed=seed)
        assert split.train.shape[0] + split.valid.shape[0] + split.test.shape[0] == 60
        held = np.vstack([split.valid, split.test])
        assert not keys(split.train) & keys(held)
        train_graph = g.without_edge_pairs(held)
        for u, v in held:
            assert v not in train_graph.neighbors(u)
        assert keys(train_graph.homogeneous_edges()) == keys(split.train)


# -----------------------------
# Temporal labels
# -----------------------------
def test_temporal_labels_two_bins(make_graph):
    g = make_graph(4, [], times=[(1, 1), (2, 2), (3, 3), (4, 4)])
    ls = temporal_labels(g, bins=2)
    np.testing.assert_array_equal(ls.nodes, [0, 1, 2, 3])
    np.testing.assert_array_equal(ls.labels, [0, 0, 1, 1])
    assert ls.kind == LabelKind.TEMPORAL


def test_temporal_label_ties_take_earliest_bin(make_graph):
    g = make_graph(4, [], times=[(1, 1), (1, 1), (1, 1), (5, 5)])
    np.testing.assert_array_equal(temporal_labels(g, bins=2).labels, [0, 0, 0, 1])


def test_temporal_labels_equal_frequency(make_graph):
    rng = np.random.default_rng(0)
    starts = rng.permutation(100)
    g = make_graph(100, [], times=[(s, s + 1) for s in starts])
    ls = temporal_labels(g, bins=4)
    np.testing.assert_array_equal(np.bincount(ls.labels), [25, 25, 25, 25])
    # monotone in start time
    order = np.argsort(starts)
    assert np.all(np.diff(ls.labels[order]) >= 0)


def test_temporal_labels_skip_untimed_nodes(make_graph):
    g = make_graph(3, [], times=[(1, 1), None, (2, 2)])
    np.testing.assert_array_equal(temporal_labels(g, bins=2).nodes, [0, 2])
    with pytest.raises(ValueError):
        temporal_labels(g, bins=1)


# -----------------------------
# Partition quality
# -----------------------------
def test_nmi_reference_values():
    assert nmi([0, 0, 1, 1], [1, 1, 0, 0]) == pytest.approx(1.0)
    assert nmi([0, 0, 0, 0], [0, 1, 0, 1]) == pytest.approx(0.0)
    assert nmi([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(EvaluationError):
        nmi([0, 1], [0, 1, 1])


def test_nmi_matches_contingency_formula():
    z = np.array([0, 0, 0, 1, 1, 2, 2, 2, 2])
    y = np.array([0, 0, 1, 1, 1, 1, 0, 0, 0])
    n = z.size
    table = np.zeros((3, 2))
    np.add.at(table, (z, y), 1)
    p = table / n
    pz, py = p.sum(axis=1), p.sum(axis=0)
    nz = p > 0
    mi = (p[nz] * np.log(p[nz] / np.outer(pz, py)[nz])).sum()
    hz, hy = -(pz * np.log(pz)).sum(), -(py * np.log(py)).sum()
    assert nmi(z, y) == pytest.approx(mi / np.sqrt(hz * hy))


def test_modularity_of_two_triangles(two_triangles):
    assert modularity(two_triangles, [0, 0, 0, 1, 1, 1]) == pytest.approx(0.5)
    assert modularity(two_triangles, [0] * 6) == pytest.approx(0.0, abs=1e-12)


def test_modularity_edge_cases(make_graph, path_graph):
    assert modularity(make_graph(3, []), [0, 1, 2]) == 0.0
    with pytest.raises(EvaluationError):
        modularity(path_graph, [0, 1])


def test_louvain_finds_two_cliques(make_graph):
    clique = [(i, j) for i in range(5) for j in range(i + 1, 5)]
    edges = clique + [(i + 5, j + 5) for i, j in clique] + [(0, 5)]
    ls = louvain_labels(make_graph(10, edges), seed=0)
    assert ls.kind == LabelKind.LINK
    assert nmi(ls.labels, [0] * 5 + [1] * 5) == pytest.approx(1.0)


def test_louvain_without_edges_gives_singletons(make_graph):
    ls = louvain_labels(make_graph(4, []), seed=0)
    assert np.unique(ls.labels).size == 4


# -----------------------------
# Probes
# -----------------------------
def separable_embeddings(n_per, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 0.1, size=(n_per, 4)) + np.array([3.0, 0, 0, 0])
    b = rng.normal(0.0, 0.1, size=(n_per, 4)) + np.array([0, 3.0, 0, 0])
    return np.vstack([a, b])


def test_cf_accuracy_on_separable_classes():
    Z = separable_embeddings(20)
    labels = LabelSet.from_pairs(np.arange(40), ["a"] * 20 + ["b"] * 20, LabelKind.GROUND_TRUTH)
    assert cf_accuracy(Z, labels, np.random.default_rng(0)) == pytest.approx(1.0)


def test_cf_accuracy_single_class_raises():
    labels = LabelSet.from_pairs(np.arange(5), ["x"] * 5, LabelKind.GROUND_TRUTH)
    with pytest.raises(EvaluationError):
        cf_accuracy(np.zeros((5, 2)), labels, np.random.default_rng(0))


def test_lp_accuracy_on_block_embeddings():
    Z = separable_embeddings(20)
    rng = np.random.default_rng(1)

    def pairs(same, count):
        out = []
        while len(out) < count:
            u, v = rng.integers(0, 40, size=2)
            if u != v and ((u < 20) == (v < 20)) == same:
                out.append((u, v))
        return np.array(out)

    split = EdgeSplit(
        train=pairs(True, 60), valid=pairs(True, 10), test=pairs(True, 20),
        train_neg=pairs(False, 60), valid_neg=pairs(False, 10), test_neg=pairs(False, 20),
    )
    assert lp_accuracy(Z, split, np.random.default_rng(0)) == pytest.approx(1.0)
    assert lp_accuracy(Z, split, np.random.default_rng(0), use="valid") == pytest.approx(1.0)


def test_label_set_from_pairs():
    ls = LabelSet.from_pairs([3, 1, 2], ["b", "a", "b"], LabelKind.GROUND_TRUTH)
    np.testing.assert_array_equal(ls.nodes, [1, 2, 3])
    assert list(ls.names()) == ["a", "b", "b"]
    assert len(ls.restrict([2, 3])) == 2
    with pytest.raises(ValueError):
        LabelSet.from_pairs([1, 1], ["a", "b"], LabelKind.GROUND_TRUTH)


# -----------------------------
# Run evaluation
# -----------------------------
def test_evaluate_run_rows(two_triangles):
    Z = separable_embeddings(3)
    z = np.array([0, 0, 0, 1, 1, 1])
    truth = LabelSet.from_pairs(np.arange(6), z, LabelKind.GROUND_TRUTH)
    rows = evaluate_run(Z, z, two_triangles, None, {LabelKind.GROUND_TRUTH: truth}, seed=0)
    assert set(rows) == REPORT_ROWS
    assert np.isnan(rows["LP_ACC"])
    assert np.isnan(rows["CF_ACC L_T"]) and np.isnan(rows["COM_NMI L_G"])
    assert rows["COM_NMI L_y"] == pytest.approx(1.0)
    assert rows["Modularity"] == pytest.approx(0.5)


def test_evaluate_run_turns_failures_into_nan(two_triangles):
    single = LabelSet.from_pairs(np.arange(6), ["x"] * 6, LabelKind.GROUND_TRUTH)
    rows = evaluate_run(np.zeros((6, 2)), np.zeros(6, dtype=int), two_triangles, None,
                        {LabelKind.GROUND_TRUTH: single})
    assert np.isnan(rows["CF_ACC L_y"])
    assert rows["Modularity"] == pytest.approx(0.0, abs=1e-12)
