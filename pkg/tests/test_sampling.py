import numpy as np
import pytest
from scipy.stats import chisquare

from graph_simulations.temporal_communities.logic.graph import TimeRange
from graph_simulations.temporal_communities.logic.sampling import (
    ballroom_walk,
    budget_sample,
    derive_rng,
    infer_timestamp,
    make_batch,
    negative_sample,
    node2vec_transition,
    node2vec_walk,
    temporal_rw,
)


def star(make_graph, leaves):
    return make_graph(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


# -----------------------------
# budget_sample
# -----------------------------
def test_budget_not_binding_returns_full_neighbourhood(path_graph):
    sub = budget_sample(path_graph, [0], layers=2, budget=4, rng=np.random.default_rng(0))
    np.testing.assert_array_equal(sub.nodes, [0, 1, 2])
    np.testing.assert_array_equal(sub.layer, [0, 1, 2])
    assert sub.batch_size == 1
    # both stored edges induced
    assert sub.edge_src.size == 2


def test_budget_cap_is_multiple_of_batch(make_graph):
    g = star(make_graph, 20)
    sub = budget_sample(g, [1, 2], layers=2, budget=4, rng=np.random.default_rng(0))
    # layer 1 is the centre only, layer 2 at most 4 * 2 leaves
    counts = sub.layer_counts(1)
    assert counts[1, 0] == 1
    assert counts[2, 0] == 8


def test_batch_keeps_order_and_drops_duplicates(path_graph):
    sub = budget_sample(path_graph, [2, 0, 2], layers=0, budget=1, rng=np.random.default_rng(0))
    np.testing.assert_array_equal(sub.nodes, [2, 0])
    assert sub.batch_size == 2


def test_per_layer_budgets(make_graph):
    g = star(make_graph, 10)
    sub = budget_sample(g, [0], layers=1, budget=(3, 1), rng=np.random.default_rng(1))
    assert sub.layer_counts(1)[1, 0] == 3


def test_budget_validation(path_graph):
    with pytest.raises(ValueError):
        budget_sample(path_graph, [], layers=1, budget=1, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        budget_sample(path_graph, [0], layers=1, budget=0, rng=np.random.default_rng(0))


@pytest.mark.slow
def test_budget_sample_is_uniform_over_leaves(make_graph):
    g = star(make_graph, 10)
    hits = np.zeros(g.num_nodes)
    runs = 10_000
    for seed in range(runs):
        sub = budget_sample(g, [0], layers=1, budget=3, rng=np.random.default_rng(seed))
        assert sub.nodes.size == 4
        hits[sub.nodes[1:]] += 1
    freq = hits[1:] / runs
    sigma = np.sqrt(0.3 * 0.7 / runs)
    assert np.all(np.abs(freq - 0.3) < 4 * sigma)


# -----------------------------
# node2vec
# -----------------------------
def test_first_step_is_uniform(path_graph):
    nbrs, probs = node2vec_transition(path_graph, None, 1, p=1.0, q=1.0)
    np.testing.assert_array_equal(nbrs, [0, 2])
    np.testing.assert_allclose(probs, [0.5, 0.5])


def test_second_order_weights(make_graph):
    # triangle 0-1-2 with tail 2-3; walk came 0 -> 2
    g = make_graph(4, [(0, 1), (1, 2), (0, 2), (2, 3)])
    nbrs, probs = node2vec_transition(g, 0, 2, p=1.0, q=0.5)
    np.testing.assert_array_equal(nbrs, [0, 1, 3])
    # return 1/p = 1, common neighbour 1, away 1/q = 2
    np.testing.assert_allclose(probs, [0.25, 0.25, 0.5])


@pytest.mark.slow
def test_transition_frequencies_match_analytic(make_graph):
    g = make_graph(4, [(0, 1), (1, 2), (0, 2), (2, 3)])
    nbrs, probs = node2vec_transition(g, 0, 2, p=1.0, q=0.5)
    rng = np.random.default_rng(11)
    draws = 10_000
    seen = np.zeros(nbrs.size)
    for _ in range(draws):
        seen[rng.choice(nbrs.size, p=probs)] += 1
    assert chisquare(seen, probs * draws).pvalue > 0.01


@pytest.mark.slow
def test_path_walk_first_hop_frequency(path_graph):
    firsts = np.array([node2vec_walk(path_graph, 1, 1, 1.0, 1.0, derive_rng(5, i))[1] for i in range(10_000)])
    freq = (firsts == 0).mean()
    assert abs(freq - 0.5) < 4 * np.sqrt(0.25 / 10_000)


def test_walk_shape(path_graph, make_graph):
    walk = node2vec_walk(path_graph, 1, 1, 1.0, 0.5, np.random.default_rng(0))
    assert walk.size == 2 and walk[0] == 1
    long = node2vec_walk(path_graph, 0, 6, 1.0, 0.5, np.random.default_rng(0))
    assert long.size == 7
    assert all(b in path_graph.neighbors(a) for a, b in zip(long[:-1], long[1:]))
    lonely = make_graph(2, [])
    np.testing.assert_array_equal(node2vec_walk(lonely, 1, 5, 1.0, 1.0, np.random.default_rng(0)), [1])


# -----------------------------
# Temporal walks
# -----------------------------
def test_temporal_walk_unconstrained_on_cycle(timed_ring):
    walk = temporal_rw(timed_ring, 0, TimeRange.everything(), 5, np.random.default_rng(0))
    assert walk.size == 5
    assert all(b in timed_ring.neighbors(a) for a, b in zip(walk[:-1], walk[1:]))


def test_temporal_walk_isolated_start(make_graph):
    g = make_graph(2, [], times=[(0, 0), (0, 0)])
    np.testing.assert_array_equal(temporal_rw(g, 0, TimeRange.everything(), 4, np.random.default_rng(0)), [0])


def test_temporal_walk_respects_window(timed_ring):
    window = TimeRange(0, 2)
    for seed in range(50):
        walk = temporal_rw(timed_ring, 1, window, 6, np.random.default_rng(seed))
        assert np.all(timed_ring.in_window(walk[1:], window))


def test_temporal_walk_restarts_from_visited_node(make_graph):
    # 0 - 1 - 2 and 0 - 3; node 2 lies outside the window and is never entered
    g = make_graph(4, [(0, 1), (1, 2), (0, 3)], times=[(0, 0), (0, 0), (9, 9), (0, 0)])
    window = TimeRange(0, 1)
    for seed in range(20):
        walk = temporal_rw(g, 0, window, 4, np.random.default_rng(seed))
        assert 2 not in walk
        assert set(walk.tolist()) <= {0, 1, 3}
        assert walk[0] == 0


def static_pairs_within_two(g, walk):
    static = sorted({int(u) for u in walk if not g.has_time[u]})
    a = g.adjacency.toarray() > 0
    reach = a | (a.astype(int) @ a.astype(int) > 0)
    return [(u, w) for i, u in enumerate(static) for w in static[i + 1:] if reach[u, w]]


def test_static_pair_suppression_survives_restarts(make_graph):
    # timestamped hub 0 with static leaves 1 and 2 (distance 2 through the hub)
    g = make_graph(3, [(0, 1), (0, 2)], times=[(0, 0), None, None])
    for seed in range(300):
        walk = temporal_rw(g, 0, TimeRange.everything(), 6, np.random.default_rng(seed),
                           suppress_static_pairs=True)
        assert not ({1, 2} <= set(walk.tolist())), walk
    # without suppression both leaves show up together
    both = sum(
        {1, 2} <= set(temporal_rw(g, 0, TimeRange.everything(), 6, np.random.default_rng(s)).tolist())
        for s in range(50)
    )
    assert both > 0


def test_static_pair_suppression_on_longer_walks(make_graph):
    # ring of 10 where even nodes are static
    n = 10
    times = [None if i % 2 == 0 else (0, 0) for i in range(n)]
    edges = [(i, (i + 1) % n) for i in range(n)] + [(0, 5), (2, 7)]
    g = make_graph(n, edges, times=times)
    for seed in range(100):
        walk = temporal_rw(g, 1, TimeRange.everything(), 8, np.random.default_rng(seed),
                           suppress_static_pairs=True)
        assert static_pairs_within_two(g, walk) == []


def test_infer_timestamp_from_static_query(make_graph):
    g = make_graph(2, [(0, 1)], times=[None, (7, 7)])
    assert infer_timestamp(g, 0, 4, np.random.default_rng(0)) == 7.0


def test_infer_timestamp_unreachable(make_graph):
    g = make_graph(3, [(0, 1)], times=[None, None, (1, 1)])
    assert infer_timestamp(g, 0, 4, np.random.default_rng(0)) is None
    assert ballroom_walk(g, 0, 2.0, 2, 3, np.random.default_rng(0)) == []


def test_ballroom_static_query_uses_neighbour_time(make_graph):
    g = make_graph(4, [(0, 1), (1, 2), (2, 3)], times=[None, (7, 7), (6, 6), (20, 20)])
    paths = ballroom_walk(g, 0, 4.0, 2, 3, np.random.default_rng(0))
    assert paths
    nodes = np.concatenate(paths)
    # window [5, 9]: node 3 never appears
    assert 3 not in nodes


def test_ballroom_pairs_stay_in_window(make_graph):
    g = make_graph(3, [(0, 1), (1, 2), (0, 2)], times=[(10, 10), (11, 11), (12, 12)])
    omega = 4.0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        for path in ballroom_walk(g, 0, omega, 1, 2, rng):
            assert np.all(np.abs(g.t_start[path] - 10) <= omega)


def test_ballroom_cuts_pool_into_n_paths(timed_ring):
    paths = ballroom_walk(timed_ring, 4, 100.0, 3, 5, np.random.default_rng(2))
    assert len(paths) == 3
    assert all(p.size == 5 for p in paths)


def test_ballroom_argument_checks(timed_ring):
    with pytest.raises(ValueError):
        ballroom_walk(timed_ring, 0, 1.0, 0, 5, np.random.default_rng(0))


# -----------------------------
# Negatives and batches
# -----------------------------
def test_negative_sample_determinism(path_graph):
    a = negative_sample(path_graph, 5, derive_rng(1, 2, 3))
    b = negative_sample(path_graph, 5, derive_rng(1, 2, 3))
    np.testing.assert_array_equal(a, b)
    single = negative_sample(path_graph, 1, np.random.default_rng(0))
    assert single.size == 1 and 0 <= single[0] < 3
    with pytest.raises(ValueError):
        negative_sample(path_graph, 0, np.random.default_rng(0))


@pytest.mark.slow
def test_negative_sample_is_uniform(make_graph):
    g = make_graph(5, [])
    rng = np.random.default_rng(0)
    counts = np.zeros(5)
    for _ in range(10_000):
        np.add.at(counts, negative_sample(g, 5, rng), 1)
    assert chisquare(counts).pvalue > 0.01


def test_make_batch_union():
    b = make_batch([1, 2], [3], [4, 5])
    assert len(b) == 5
    assert len(make_batch([1, 2], [1, 2], [2, 1])) == 2
    over = make_batch([0, 1, 2], [2, 3], [3, 9, 0], queries=[7])
    assert set(over.nodes.tolist()) == {0, 1, 2, 3, 7, 9}
    assert over.nodes[0] == 7 and over.is_query[0] and over.is_query.sum() == 1
    np.testing.assert_array_equal(over.nodes[over.positions([9, 2])], [9, 2])
    with pytest.raises(KeyError):
        over.positions([42])


def test_derive_rng_streams_differ():
    a = derive_rng(0, 1, 2).integers(1 << 30, size=4)
    b = derive_rng(0, 2, 1).integers(1 << 30, size=4)
    assert not np.array_equal(a, b)
