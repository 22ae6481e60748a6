import numpy as np
import pytest
from scipy.special import gammaln, multigammaln
from scipy.stats import multivariate_normal
from sklearn.metrics import normalized_mutual_info_score

from graph_simulations.temporal_communities.data.train_config import TrainConfig
from graph_simulations.temporal_communities.errors import ConfigError
from graph_simulations.temporal_communities.logic.clustering import (
    ClusterState,
    NWPrior,
    Phase,
    SufficientStats,
    assign,
    e_step,
    em_round,
    has_converged,
    kmeans_init,
    log_marginal_likelihood,
    lower_bound,
    m_step,
    merge_candidates,
    nw_posterior,
    point_estimate,
    propose_merge,
    propose_split,
    regularize,
    run_clustering,
    split_log_ratio,
)


def blobs(centres, per, scale, seed):
    rng = np.random.default_rng(seed)
    centres = np.asarray(centres, dtype=float)
    X = np.vstack([c + scale * rng.normal(size=(per, centres.shape[1])) for c in centres])
    y = np.repeat(np.arange(len(centres)), per)
    return X, y


def prior_for(X, **kw):
    cfg = TrainConfig(**kw) if kw else TrainConfig()
    return NWPrior.from_data(X, cfg)


# -----------------------------
# Initialisation and EM
# -----------------------------
def test_single_cluster_init_is_data_mean():
    X = np.random.default_rng(0).normal(size=(20, 3))
    state = kmeans_init(X, 1, np.random.default_rng(0))
    assert state.K == 1
    np.testing.assert_allclose(state.means[0], X.mean(axis=0))
    assert state.weights[0] == 1.0


def test_two_pairs_get_their_own_cluster():
    X = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.0, 10.1]])
    state = kmeans_init(X, 2, np.random.default_rng(0))
    assert state.z[0] == state.z[1]
    assert state.z[2] == state.z[3]
    assert state.z[0] != state.z[2]


def test_kmeans_init_is_deterministic():
    X, _ = blobs([[0, 0], [5, 5]], 30, 1.0, 1)
    a = kmeans_init(X, 3, np.random.default_rng(7))
    b = kmeans_init(X, 3, np.random.default_rng(7))
    np.testing.assert_array_equal(a.z, b.z)
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.sub_z, b.sub_z)


def test_kmeans_init_checks_arguments():
    with pytest.raises(ConfigError):
        kmeans_init(np.zeros((3, 2)), 0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        kmeans_init(np.zeros((1, 2)), 2, np.random.default_rng(0))


def _state(means, covs, weights, X):
    K, d = len(means), X.shape[1]
    z = np.zeros(X.shape[0], dtype=np.int64)
    return ClusterState(
        means=np.asarray(means, float), covs=np.asarray(covs, float), weights=np.asarray(weights, float),
        counts=np.zeros(K, dtype=np.int64), z=z,
        sub_means=np.repeat(np.asarray(means, float)[:, None, :], 2, axis=1),
        sub_covs=np.repeat(np.asarray(covs, float)[:, None], 2, axis=1),
        sub_weights=np.full((K, 2), 0.5), sub_z=z.copy(),
    )


def test_e_step_assigns_to_nearest_and_breaks_ties_low():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]])
    state = _state([[0.0, 0.0], [2.0, 0.0]], [np.eye(2), np.eye(2)], [0.5, 0.5], X)
    z, _ = e_step(X, state)
    # (1, 0) is equidistant and goes to the lower index
    np.testing.assert_array_equal(z, [0, 0, 1])


def test_e_step_matches_direct_density_argmax():
    X, _ = blobs([[0, 0], [3, 0], [0, 3]], 17, 1.0, 3)
    X = X[:50]
    rng = np.random.default_rng(4)
    means = rng.normal(size=(3, 2)) * 2
    covs = np.stack([np.eye(2) * s for s in (0.5, 1.0, 2.0)])
    weights = np.array([0.2, 0.3, 0.5])
    state = _state(means, covs, weights, X)
    z, _ = e_step(X, state)
    scores = np.column_stack([np.log(weights[k]) + multivariate_normal.logpdf(X, means[k], covs[k]) for k in range(3)])
    np.testing.assert_array_equal(z, scores.argmax(axis=1))


def test_m_step_drops_empty_clusters():
    X, _ = blobs([[0, 0], [6, 6]], 10, 0.5, 2)
    state = kmeans_init(X, 2, np.random.default_rng(0))
    state.z = np.zeros_like(state.z)
    new = m_step(X, state, prior_for(X))
    assert new.K == 1
    np.testing.assert_array_equal(new.counts, [20])


# -----------------------------
# Conjugate posterior
# -----------------------------
def test_empty_stats_give_prior():
    X = np.random.default_rng(0).normal(size=(10, 2))
    prior = prior_for(X)
    post = nw_posterior(SufficientStats.empty(2), prior)
    np.testing.assert_array_equal(post.mean, prior.mu0)
    np.testing.assert_array_equal(post.psi, prior.psi0)
    assert (post.kappa, post.nu) == (prior.kappa, prior.nu)


def test_prior_from_stats_scales_data_covariance():
    X = np.random.default_rng(6).normal(size=(40, 3)) * np.array([1.0, 2.0, 0.5])
    cov = np.cov(X, rowvar=False, bias=True)
    prior = NWPrior.from_stats(SufficientStats.from_rows(X), alpha=3.0, kappa=0.5, nu_offset=1.0, sigma_scale=0.2)
    np.testing.assert_allclose(prior.mu0, X.mean(axis=0))
    assert (prior.nu, prior.kappa, prior.alpha) == (4.0, 0.5, 3.0)
    np.testing.assert_allclose(prior.psi0, 0.2 * cov, atol=1e-12)
    # nu - d - 1 = 3
    wide = NWPrior.from_stats(SufficientStats.from_rows(X), nu_offset=4.0, sigma_scale=0.2)
    assert wide.nu == 7.0
    np.testing.assert_allclose(wide.psi0 / 3.0, 0.2 * cov, atol=1e-12)


def test_prior_rejects_bad_hyperparameters():
    with pytest.raises(ConfigError):
        NWPrior(mu0=np.zeros(2), kappa=0.0, nu=4.0, psi0=np.eye(2), alpha=1.0, sigma_scale=1.0)
    with pytest.raises(ConfigError):
        NWPrior(mu0=np.zeros(2), kappa=1.0, nu=2.0, psi0=np.eye(2), alpha=1.0, sigma_scale=1.0)
    with pytest.raises(ValueError):
        NWPrior.from_stats(SufficientStats.empty(2))


def test_single_cluster_fit_matches_closed_form_posterior():
    X = np.random.default_rng(8).normal(loc=2.0, size=(25, 3))
    prior = NWPrior(mu0=np.array([0.5, -1.0, 0.0]), kappa=2.0, nu=6.0, psi0=0.3 * np.eye(3),
                    alpha=1.0, sigma_scale=1.0)
    state = em_round(X, kmeans_init(X, 1, np.random.default_rng(0), prior), prior)
    n, d = 25, 3
    xbar = X.mean(axis=0)
    scatter = (X - xbar).T @ (X - xbar)
    diff = xbar - prior.mu0
    mean = (2.0 * prior.mu0 + n * xbar) / (2.0 + n)
    psi = prior.psi0 + scatter + (2.0 * n / (2.0 + n)) * np.outer(diff, diff)
    assert state.K == 1
    np.testing.assert_allclose(state.means[0], mean, atol=1e-8)
    np.testing.assert_allclose(state.covs[0], regularize(psi / (6.0 + n - d - 1)), atol=1e-8)
    _, cov = point_estimate(nw_posterior(SufficientStats.from_rows(X), prior), prior)
    np.testing.assert_allclose(state.covs[0], cov, atol=1e-8)


@pytest.mark.parametrize("with_prior_init", [False, True])
def test_em_rounds_never_lower_the_bound(with_prior_init):
    for seed in range(5):
        rng = np.random.default_rng(seed)
        centres = rng.normal(scale=4.0, size=(3, 3))
        X, _ = blobs(centres, 30, 1.0, seed)
        prior = prior_for(X)
        state = kmeans_init(X, 3, np.random.default_rng(seed), prior if with_prior_init else None)
        bounds = [lower_bound(X, state, prior)]
        for _ in range(20):
            state = em_round(X, state, prior)
            bounds.append(lower_bound(X, state, prior))
        deltas = np.diff(bounds)
        assert deltas.min() >= -1e-9 * max(1.0, abs(bounds[0])), (seed, deltas)


def test_posterior_of_three_points_by_hand():
    X = np.array([[1.0, 0.0], [0.0, 2.0], [2.0, 1.0]])
    prior = NWPrior(mu0=np.zeros(2), kappa=1.0, nu=4.0, psi0=np.eye(2), alpha=1.0, sigma_scale=1.0)
    post = nw_posterior(SufficientStats.from_rows(X), prior)
    xbar = np.array([1.0, 1.0])
    scatter = sum(np.outer(x - xbar, x - xbar) for x in X)
    assert post.kappa == 4.0 and post.nu == 7.0
    np.testing.assert_allclose(post.mean, 3 * xbar / 4, atol=1e-10)
    np.testing.assert_allclose(post.psi, np.eye(2) + scatter + (3.0 / 4.0) * np.outer(xbar, xbar), atol=1e-10)


def test_posterior_mean_approaches_sample_mean():
    X = np.random.default_rng(1).normal(loc=3.0, size=(100_000, 2))
    prior = NWPrior(mu0=np.zeros(2), kappa=1.0, nu=3.0, psi0=np.eye(2), alpha=1.0, sigma_scale=1.0)
    post = nw_posterior(SufficientStats.from_rows(X), prior)
    assert np.linalg.norm(post.mean - X.mean(axis=0)) <= 1e-3


def test_marginal_likelihood_matches_direct_formula():
    X = np.random.default_rng(2).normal(size=(6, 2))
    prior = NWPrior(mu0=np.zeros(2), kappa=0.5, nu=4.0, psi0=2.0 * np.eye(2), alpha=1.0, sigma_scale=1.0)
    n, d = 6, 2
    post = nw_posterior(SufficientStats.from_rows(X), prior)
    expected = (
        -0.5 * n * d * np.log(np.pi)
        + multigammaln(post.nu / 2, d) - multigammaln(prior.nu / 2, d)
        + 0.5 * prior.nu * np.linalg.slogdet(prior.psi0)[1]
        - 0.5 * post.nu * np.linalg.slogdet(post.psi)[1]
        + 0.5 * d * (np.log(prior.kappa) - np.log(post.kappa))
    )
    assert log_marginal_likelihood(SufficientStats.from_rows(X), prior) == pytest.approx(expected, abs=1e-8)


def test_sufficient_stats_accumulate():
    X = np.random.default_rng(3).normal(size=(9, 3))
    parts = SufficientStats.accumulate([X[:4], X[4:]])
    whole = SufficientStats.from_rows(X)
    assert parts.n == whole.n
    np.testing.assert_allclose(parts.mean(), whole.mean())
    np.testing.assert_allclose(parts.scatter(), whole.scatter())


# -----------------------------
# Lower bound
# -----------------------------
def test_one_cluster_bound_matches_direct_evaluation():
    X = np.random.default_rng(5).normal(size=(10, 2))
    prior = prior_for(X)
    state = kmeans_init(X, 1, np.random.default_rng(0))
    alpha = prior.alpha

    def log_c(psi, nu, kappa):
        return 0.5 * nu * 2 * np.log(2) + multigammaln(nu / 2, 2) - 0.5 * nu * np.linalg.slogdet(psi)[1] - np.log(kappa)

    def term(rows):
        post = nw_posterior(SufficientStats.from_rows(rows), prior)
        return log_c(post.psi, post.nu, post.kappa) - log_c(prior.psi0, prior.nu, prior.kappa)

    top = gammaln(alpha + 10) - gammaln(alpha + 10) - (gammaln(alpha) - gammaln(alpha)) + term(X)
    subs = [X[state.sub_z == s] for s in (0, 1)]
    a = alpha / 2
    sub = (sum(gammaln(a + len(r)) for r in subs) - gammaln(alpha + 10)) - (2 * gammaln(a) - gammaln(alpha))
    sub += sum(term(r) for r in subs if len(r))
    assert lower_bound(X, state, prior) == pytest.approx(top + sub, abs=1e-8)


def test_convergence_detection():
    assert not has_converged([1.0])
    assert has_converged([10.0, 10.0 + 1e-9])
    assert has_converged([0.0, 1.0, 0.5, 1.0, 0.5])
    assert not has_converged([0.0, 1.0, 2.0, 3.0, 4.0])


# -----------------------------
# Split / merge
# -----------------------------
def test_tiny_subcluster_skips_split():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    state = kmeans_init(X, 1, np.random.default_rng(0))
    state.sub_z = np.array([0, 0, 1])
    assert split_log_ratio(X, state, 0, prior_for(X)) is None
    accepted, same = propose_split(X, state, 0, prior_for(X), np.random.default_rng(0))
    assert not accepted and same is state


def test_merge_needs_two_clusters():
    X = np.random.default_rng(0).normal(size=(10, 2))
    state = kmeans_init(X, 1, np.random.default_rng(0))
    assert merge_candidates(state) == []


@pytest.mark.slow
def test_separated_blobs_are_split():
    accepted = 0
    for seed in range(10):
        X, _ = blobs([[0, 0], [12, 12]], 100, 1.0, seed)
        state = kmeans_init(X, 1, np.random.default_rng(seed))
        ok, new = propose_split(X, state, 0, prior_for(X), np.random.default_rng(seed))
        accepted += ok
        if ok:
            assert new.K == 2 and new.accepted_splits == 1
    assert accepted >= 9


@pytest.mark.slow
def test_single_blob_is_rarely_split():
    accepted = 0
    for seed in range(10):
        X, _ = blobs([[0, 0]], 200, 1.0, seed)
        state = kmeans_init(X, 1, np.random.default_rng(seed))
        accepted += propose_split(X, state, 0, prior_for(X), np.random.default_rng(seed))[0]
    assert accepted <= 2


@pytest.mark.slow
def test_halves_of_one_blob_are_merged():
    accepted = 0
    for seed in range(10):
        X, _ = blobs([[0, 0]], 200, 1.0, seed)
        state = kmeans_init(X, 2, np.random.default_rng(seed))
        ok, new = propose_merge(X, state, 0, 1, prior_for(X), np.random.default_rng(seed))
        accepted += ok
        if ok:
            assert new.K == 1
    assert accepted >= 9


@pytest.mark.slow
def test_separated_blobs_are_rarely_merged():
    accepted = 0
    for seed in range(10):
        X, _ = blobs([[0, 0], [12, 12]], 100, 1.0, seed)
        state = kmeans_init(X, 2, np.random.default_rng(seed))
        accepted += propose_merge(X, state, 0, 1, prior_for(X), np.random.default_rng(seed))[0]
    assert accepted <= 2


# -----------------------------
# State machine
# -----------------------------
def test_run_clustering_checks_steps():
    X = np.random.default_rng(0).normal(size=(10, 2))
    with pytest.raises(ConfigError):
        run_clustering(X, prior_for(X), 0, np.random.default_rng(0))


def test_run_clustering_is_resumable():
    X, _ = blobs([[0, 0], [8, 0]], 40, 0.7, 0)
    prior = prior_for(X)
    state = run_clustering(X, prior, 2, np.random.default_rng(0), k_init=2)
    assert len(state.trace) <= 2
    resumed = run_clustering(X, prior, 50, np.random.default_rng(1), state=state)
    assert resumed.phase is Phase.DONE
    assert resumed.K == 2
    resumed.check()
    np.testing.assert_array_equal(assign(X, resumed), resumed.z)
    # the input state is not modified
    assert len(state.trace) <= 2


def test_finished_state_can_be_restarted():
    X, _ = blobs([[0, 0], [8, 0]], 40, 0.7, 0)
    prior = prior_for(X)
    done = run_clustering(X, prior, 50, np.random.default_rng(0), k_init=2)
    assert done.phase is Phase.DONE
    again = run_clustering(X, prior, 50, np.random.default_rng(0), state=done)
    assert len(again.trace) == len(done.trace)
    restarted = run_clustering(X, prior, 1, np.random.default_rng(0), state=done, restart=True)
    assert len(restarted.trace) == len(done.trace) + 1
    assert len(restarted.history) == 1


def test_state_arrays_round_trip():
    X, _ = blobs([[0, 0], [8, 0]], 20, 0.7, 0)
    state = run_clustering(X, prior_for(X), 5, np.random.default_rng(0), k_init=2)
    back = ClusterState.from_arrays(state.to_arrays())
    assert back.K == state.K and back.phase is state.phase
    np.testing.assert_array_equal(back.z, state.z)
    np.testing.assert_allclose(back.means, state.means)


@pytest.mark.slow
def test_three_gaussians_from_one_cluster():
    good = 0
    for seed in range(10):
        X, y = blobs([[0, 0], [10, 0], [5, 9]], 167, 1.0, seed)
        state = run_clustering(X, prior_for(X), 200, np.random.default_rng(seed), k_init=1)
        nmi = normalized_mutual_info_score(y, assign(X, state))
        good += state.K == 3 and nmi >= 0.95
    assert good >= 9


@pytest.mark.slow
def test_single_gaussian_collapses_to_one_cluster():
    good = 0
    for seed in range(10):
        X, _ = blobs([[0, 0]], 300, 1.0, seed)
        state = run_clustering(X, prior_for(X), 200, np.random.default_rng(seed), k_init=4)
        good += state.K == 1
    assert good >= 8
