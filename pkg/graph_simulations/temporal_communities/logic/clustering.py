# graph_simulations/temporal_communities/logic/clustering.py

"""
clustering.py

Dirichlet-process Gaussian mixture over embeddings with a Normal-Wishart prior.

Each cluster keeps two sub-clusters. Hard EM refines clusters and
sub-clusters together; once the monitored lower bound settles, sub-clusters
are proposed as splits and nearby clusters as merges, accepted by their
marginal-likelihood Hastings ratio. The run cycles

    CONVERGING --(bound oscillates / stalls)--> PROPOSAL
    PROPOSAL   --(any split or merge accepted)--> CONVERGING
    PROPOSAL   --(nothing accepted)--> DONE
"""

from __future__ import annotations

import logging
import warnings
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.linalg import LinAlgError, cho_factor
from scipy.special import gammaln, multigammaln
from scipy.stats import multivariate_normal
from sklearn.cluster import KMeans

from graph_simulations.temporal_communities.data.constants import (
    BOUND_ATOL, CONVERGENCE_RTOL, COV_REG, FLOAT, KMEANS_MAX_ITER, LOWER_BOUND_HISTORY,
    MERGE_NEIGHBOURS, MIN_SUBCLUSTER_SIZE, OSCILLATION_WINDOW,
)
from graph_simulations.temporal_communities.data.train_config import TrainConfig
from graph_simulations.temporal_communities.errors import ConfigError

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


# -----------------------------
# Prior and conjugate updates
# -----------------------------
def regularize(cov: np.ndarray) -> np.ndarray:
    """cov + eps * I with eps = COV_REG * trace(cov) / d (COV_REG when the trace vanishes)."""
    d = cov.shape[0]
    eps = COV_REG * np.trace(cov) / d
    if not eps > 0:
        eps = COV_REG
    return cov + eps * np.eye(d)


def logdet_pd(mat: np.ndarray, what: str = "matrix") -> float:
    """log|mat| through Cholesky; a non-PD input is regularized with a warning."""
    try:
        c, _ = cho_factor(mat, lower=True, check_finite=True)
    except LinAlgError:
        msg = f"{what} is not positive definite; adding eps * I"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        logger.warning(msg)
        c, _ = cho_factor(regularize(mat), lower=True)
    return 2.0 * float(np.log(np.diag(c)).sum())


@dataclass(frozen=True)
class NWPrior:
    mu0: np.ndarray
    kappa: float
    nu: float
    psi0: np.ndarray
    alpha: float
    sigma_scale: float

    def __post_init__(self):
        d = self.dim
        if self.kappa <= 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa}")
        if self.nu < d + 1:
            raise ConfigError(f"nu must be >= d + 1 = {d + 1}, got {self.nu}")
        if not np.allclose(self.psi0, self.psi0.T):
            raise ConfigError("psi0 must be symmetric")

    @property
    def dim(self) -> int:
        return int(self.mu0.shape[0])

    @classmethod
    def from_stats(cls, stats: "SufficientStats", alpha: float = 10.0, kappa: float = 1.0,
                   nu_offset: float = 1.0, sigma_scale: float = 0.05) -> "NWPrior":
        """
        mu0 = data mean, nu = d + nu_offset and psi0 chosen so the prior
        expected covariance is sigma_scale * Cov(data).
        """
        if stats.n < 1:
            raise ValueError("Cannot build a prior from zero rows")
        d = stats.dim
        nu = d + nu_offset
        cov = stats.scatter() / stats.n
        psi0 = sigma_scale * cov * max(nu - d - 1.0, 1.0)
        try:
            cho_factor(psi0, lower=True)
        except LinAlgError:
            msg = "Data covariance is singular; regularizing the prior scale"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            logger.warning(msg)
            psi0 = regularize(psi0)
        psi0 = 0.5 * (psi0 + psi0.T)
        return cls(mu0=stats.mean(), kappa=float(kappa), nu=float(nu), psi0=psi0,
                   alpha=float(alpha), sigma_scale=float(sigma_scale))

    @classmethod
    def from_data(cls, Z: np.ndarray, cfg: TrainConfig | None = None) -> "NWPrior":
        cfg = cfg or TrainConfig()
        return cls.from_stats(SufficientStats.from_rows(Z), alpha=cfg.alpha, kappa=cfg.kappa,
                              nu_offset=cfg.nu_offset, sigma_scale=cfg.sigma_scale)


@dataclass
class SufficientStats:
    """Count, sum and sum of outer products; adds up across batches."""
    n: int
    total: np.ndarray
    outer: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.total.shape[0])

    @classmethod
    def empty(cls, d: int) -> "SufficientStats":
        return cls(0, np.zeros(d), np.zeros((d, d)))

    @classmethod
    def from_rows(cls, X: np.ndarray) -> "SufficientStats":
        X = np.atleast_2d(np.asarray(X, dtype=FLOAT))
        return cls(int(X.shape[0]), X.sum(axis=0), X.T @ X)

    @classmethod
    def accumulate(cls, batches) -> "SufficientStats":
        out = None
        for X in batches:
            s = cls.from_rows(X)
            out = s if out is None else out + s
        if out is None:
            raise ValueError("No batches to accumulate")
        return out

    def __add__(self, other: "SufficientStats") -> "SufficientStats":
        return SufficientStats(self.n + other.n, self.total + other.total, self.outer + other.outer)

    def mean(self) -> np.ndarray:
        return self.total / self.n if self.n else np.zeros_like(self.total)

    def scatter(self) -> np.ndarray:
        """sum_i (x_i - mean)(x_i - mean)^T"""
        if self.n == 0:
            return np.zeros_like(self.outer)
        m = self.mean()
        s = self.outer - self.n * np.outer(m, m)
        return 0.5 * (s + s.T)


@dataclass(frozen=True)
class NWPosterior:
    kappa: float
    nu: float
    mean: np.ndarray
    psi: np.ndarray


def nw_posterior(stats: SufficientStats, prior: NWPrior) -> NWPosterior:
    n = stats.n
    kappa_n = prior.kappa + n
    nu_n = prior.nu + n
    if n == 0:
        return NWPosterior(prior.kappa, prior.nu, prior.mu0.copy(), prior.psi0.copy())
    xbar = stats.mean()
    diff = xbar - prior.mu0
    mean = (prior.kappa * prior.mu0 + n * xbar) / kappa_n
    psi = prior.psi0 + stats.scatter() + (prior.kappa * n / kappa_n) * np.outer(diff, diff)
    return NWPosterior(kappa_n, nu_n, mean, 0.5 * (psi + psi.T))


def point_estimate(post: NWPosterior, prior: NWPrior) -> tuple:
    """(mu, Sigma): posterior mean and psi / max(nu - d - 1, 1) + eps * I."""
    d = prior.dim
    cov = post.psi / max(post.nu - d - 1.0, 1.0)
    return post.mean, regularize(cov)


def log_normalizer(psi: np.ndarray, nu: float, kappa: float) -> float:
    """log C(psi, nu, kappa) of the Normal-Wishart density."""
    d = psi.shape[0]
    return (
        0.5 * nu * d * np.log(2.0)
        + multigammaln(0.5 * nu, d)
        - 0.5 * nu * logdet_pd(psi, "Normal-Wishart scale")
        - 0.5 * d * np.log(kappa)
    )


def log_marginal_likelihood(stats: SufficientStats, prior: NWPrior) -> float:
    """log p(X | prior) with the Gaussian parameters integrated out."""
    post = nw_posterior(stats, prior)
    return (
        log_normalizer(post.psi, post.nu, post.kappa)
        - log_normalizer(prior.psi0, prior.nu, prior.kappa)
        - 0.5 * stats.n * prior.dim * LOG_2PI
    )


def _log_dirichlet_norm(a: np.ndarray) -> float:
    return float(gammaln(a).sum() - gammaln(a.sum()))


# -----------------------------
# State
# -----------------------------
class Phase(Enum):
    CONVERGING = "converging"
    PROPOSAL = "proposal"
    DONE = "done"


@dataclass
class ClusterState:
    means: np.ndarray               # K x d
    covs: np.ndarray                # K x d x d
    weights: np.ndarray             # K
    counts: np.ndarray              # K
    z: np.ndarray                   # N
    sub_means: np.ndarray           # K x 2 x d
    sub_covs: np.ndarray            # K x 2 x d x d
    sub_weights: np.ndarray         # K x 2
    sub_z: np.ndarray               # N, values in {0, 1}
    phase: Phase = Phase.CONVERGING
    history: deque = field(default_factory=lambda: deque(maxlen=LOWER_BOUND_HISTORY))
    trace: list = field(default_factory=list)
    accepted_splits: int = 0
    accepted_merges: int = 0

    @property
    def K(self) -> int:
        return int(self.means.shape[0])

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    def sub_counts(self) -> np.ndarray:
        out = np.zeros((self.K, 2), dtype=np.int64)
        np.add.at(out, (self.z, self.sub_z), 1)
        return out

    def push_bound(self, value: float) -> None:
        self.history.append(float(value))
        self.trace.append(float(value))

    def copy(self) -> "ClusterState":
        return replace(
            self,
            means=self.means.copy(), covs=self.covs.copy(), weights=self.weights.copy(),
            counts=self.counts.copy(), z=self.z.copy(), sub_means=self.sub_means.copy(),
            sub_covs=self.sub_covs.copy(), sub_weights=self.sub_weights.copy(),
            sub_z=self.sub_z.copy(), history=deque(self.history, maxlen=LOWER_BOUND_HISTORY),
            trace=list(self.trace),
        )

    def check(self) -> None:
        """Raises AssertionError when the state violates its invariants."""
        assert np.isclose(self.weights.sum(), 1.0)
        assert np.array_equal(self.counts, np.bincount(self.z, minlength=self.K))
        assert np.isin(self.sub_z, (0, 1)).all()
        for cov in self.covs:
            np.linalg.cholesky(cov)

    def to_arrays(self, prefix: str = "cluster") -> dict:
        arrays = {f"{prefix}.{k}": getattr(self, k) for k in (
            "means", "covs", "weights", "counts", "z", "sub_means", "sub_covs", "sub_weights", "sub_z")}
        arrays[f"{prefix}.history"] = np.asarray(self.history, dtype=FLOAT)
        arrays[f"{prefix}.trace"] = np.asarray(self.trace, dtype=FLOAT)
        arrays[f"{prefix}.phase"] = np.array(list(Phase).index(self.phase))
        arrays[f"{prefix}.accepted"] = np.array([self.accepted_splits, self.accepted_merges])
        return arrays

    @classmethod
    def from_arrays(cls, arrays: dict, prefix: str = "cluster") -> "ClusterState":
        get = lambda k: np.array(arrays[f"{prefix}.{k}"])
        acc = get("accepted")
        return cls(
            means=get("means"), covs=get("covs"), weights=get("weights"),
            counts=get("counts").astype(np.int64), z=get("z").astype(np.int64),
            sub_means=get("sub_means"), sub_covs=get("sub_covs"), sub_weights=get("sub_weights"),
            sub_z=get("sub_z").astype(np.int64), phase=list(Phase)[int(get("phase"))],
            history=deque(get("history").tolist(), maxlen=LOWER_BOUND_HISTORY),
            trace=get("trace").tolist(), accepted_splits=int(acc[0]), accepted_merges=int(acc[1]),
        )


def principal_split(X: np.ndarray) -> np.ndarray:
    """0/1 labels cutting X through its mean, orthogonal to the leading principal axis."""
    n = X.shape[0]
    labels = np.zeros(n, dtype=np.int64)
    if n < 2:
        return labels
    centred = X - X.mean(axis=0)
    _, vecs = np.linalg.eigh(centred.T @ centred)
    proj = centred @ vecs[:, -1]
    labels[proj > 0] = 1
    if labels.min() == labels.max():
        labels[np.argsort(proj, kind="stable")[n // 2:]] = 1
    return labels


def _empirical(X: np.ndarray, d: int) -> tuple:
    if X.shape[0] == 0:
        return np.zeros(d), regularize(np.eye(d))
    s = SufficientStats.from_rows(X)
    return s.mean(), regularize(s.scatter() / s.n)


def kmeans_init(Z: np.ndarray, k_init: int, rng: np.random.Generator,
                prior: NWPrior | None = None) -> ClusterState:
    """
    k-means++ seeding and Lloyd iterations; empty clusters dropped; each
    cluster's sub-clusters cut along its principal axis. Covariances are the
    empirical scatter plus eps * I, or the conjugate point estimates of
    m_step when a prior is given.
    """
    Z = np.asarray(Z, dtype=FLOAT)
    if k_init < 1:
        raise ConfigError(f"k_init must be >= 1, got {k_init}")
    if Z.shape[0] < k_init:
        raise ValueError(f"k-means needs at least k_init={k_init} rows, got {Z.shape[0]}")
    km = KMeans(n_clusters=k_init, init="k-means++", n_init=1, max_iter=KMEANS_MAX_ITER,
                random_state=int(rng.integers(2**31 - 1)))
    with warnings.catch_warnings():
        # duplicate rows make sklearn warn about fewer distinct clusters
        warnings.simplefilter("ignore")
        labels = km.fit_predict(Z)
    _, z = np.unique(labels, return_inverse=True)
    z = z.astype(np.int64)
    K, d = int(z.max()) + 1, Z.shape[1]
    if K < k_init:
        logger.info("k-means dropped %d empty clusters", k_init - K)

    sub_z = np.zeros(Z.shape[0], dtype=np.int64)
    means, covs = np.zeros((K, d)), np.zeros((K, d, d))
    sub_means, sub_covs = np.zeros((K, 2, d)), np.zeros((K, 2, d, d))
    sub_weights = np.zeros((K, 2))
    counts = np.bincount(z, minlength=K)
    for k in range(K):
        idx = np.flatnonzero(z == k)
        means[k], covs[k] = _empirical(Z[idx], d)
        sub_z[idx] = principal_split(Z[idx])
        for s in (0, 1):
            rows = Z[idx[sub_z[idx] == s]]
            sub_means[k, s], sub_covs[k, s] = _empirical(rows, d)
            sub_weights[k, s] = rows.shape[0] / idx.size
    state = ClusterState(
        means=means, covs=covs, weights=counts / counts.sum(), counts=counts, z=z,
        sub_means=sub_means, sub_covs=sub_covs, sub_weights=sub_weights, sub_z=sub_z,
    )
    return state if prior is None else m_step(Z, state, prior)


# -----------------------------
# EM
# -----------------------------
def _log_density(X: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    return np.atleast_1d(multivariate_normal.logpdf(X, mean=mean, cov=cov))


def e_step(Z: np.ndarray, state: ClusterState, prior: NWPrior | None = None) -> tuple:
    """
    Hard assignments (z, sub_z). z_i = argmax_k log pi_k + log N(Z_i; mu_k, Sigma_k),
    ties to the lower index; sub-assignments likewise within the chosen cluster.
    """
    Z = np.asarray(Z, dtype=FLOAT)
    scores = np.column_stack([
        np.log(state.weights[k]) + _log_density(Z, state.means[k], state.covs[k]) for k in range(state.K)
    ])
    z = scores.argmax(axis=1).astype(np.int64)
    sub_z = np.zeros_like(z)
    for k in range(state.K):
        idx = np.flatnonzero(z == k)
        if idx.size == 0:
            continue
        sub_scores = np.column_stack([
            np.log(max(state.sub_weights[k, s], 1e-300))
            + _log_density(Z[idx], state.sub_means[k, s], state.sub_covs[k, s])
            for s in (0, 1)
        ])
        sub_z[idx] = sub_scores.argmax(axis=1)
    return z, sub_z


def m_step(Z: np.ndarray, state: ClusterState, prior: NWPrior) -> ClusterState:
    """
    Conjugate posterior point estimates for clusters and sub-clusters from the
    current assignments. Empty clusters are removed; a cluster whose
    sub-cluster emptied is cut again along its principal axis.
    """
    Z = np.asarray(Z, dtype=FLOAT)
    used, z = np.unique(state.z, return_inverse=True)
    z = z.astype(np.int64)
    if used.size < state.K:
        logger.debug("Removing %d empty clusters", state.K - used.size)
    K, d = used.size, Z.shape[1]
    sub_z = state.sub_z.copy()
    counts = np.bincount(z, minlength=K)

    means, covs = np.zeros((K, d)), np.zeros((K, d, d))
    sub_means, sub_covs = np.zeros((K, 2, d)), np.zeros((K, 2, d, d))
    sub_weights = np.zeros((K, 2))
    half = prior.alpha / 2.0
    for k in range(K):
        idx = np.flatnonzero(z == k)
        X = Z[idx]
        means[k], covs[k] = point_estimate(nw_posterior(SufficientStats.from_rows(X), prior), prior)
        if np.bincount(sub_z[idx], minlength=2).min() == 0:
            sub_z[idx] = principal_split(X)
        for s in (0, 1):
            rows = X[sub_z[idx] == s]
            stats = SufficientStats.from_rows(rows) if rows.shape[0] else SufficientStats.empty(d)
            sub_means[k, s], sub_covs[k, s] = point_estimate(nw_posterior(stats, prior), prior)
            sub_weights[k, s] = rows.shape[0] + half
        sub_weights[k] /= sub_weights[k].sum()

    weights = counts + prior.alpha / K
    new = replace(
        state, means=means, covs=covs, weights=weights / weights.sum(), counts=counts, z=z,
        sub_means=sub_means, sub_covs=sub_covs, sub_weights=sub_weights, sub_z=sub_z,
    )
    return new


def lower_bound(Z: np.ndarray, state: ClusterState, prior: NWPrior) -> float:
    """
    Sum of the cluster-level and sub-cluster-level bounds. For hard
    assignments the entropy term vanishes and each level reduces to

        log B(alpha/K + N) - log B(alpha/K) + sum_k [log C_k - log C_0]
    """
    Z = np.asarray(Z, dtype=FLOAT)
    d = Z.shape[1]
    log_c0 = log_normalizer(prior.psi0, prior.nu, prior.kappa)
    K = max(state.K, 1)
    counts = np.bincount(state.z, minlength=K).astype(FLOAT)

    def level(groups: list, alpha_each: float) -> float:
        a = np.full(len(groups), alpha_each)
        n = np.array([g.n for g in groups], dtype=FLOAT)
        value = _log_dirichlet_norm(a + n) - _log_dirichlet_norm(a)
        for g in groups:
            if g.n:
                post = nw_posterior(g, prior)
                value += log_normalizer(post.psi, post.nu, post.kappa) - log_c0
        return value

    def stats_of(mask) -> SufficientStats:
        return SufficientStats.from_rows(Z[mask]) if mask.any() else SufficientStats.empty(d)

    total = level([stats_of(state.z == k) for k in range(K)], prior.alpha / K)
    for k in range(K):
        if counts[k] == 0:
            continue
        total += level([stats_of((state.z == k) & (state.sub_z == s)) for s in (0, 1)], prior.alpha / 2.0)
    return float(total)


def em_round(Z: np.ndarray, state: ClusterState, prior: NWPrior) -> ClusterState:
    """
    Hard E-step then M-step. Hard assignments under point estimates can lower
    the bound; such an update is rejected and the current partition is
    re-estimated instead, so the bound never decreases across rounds.
    """
    Z = np.asarray(Z, dtype=FLOAT)
    z, sub_z = e_step(Z, state, prior)
    new = m_step(Z, replace(state, z=z, sub_z=sub_z), prior)
    before = lower_bound(Z, state, prior)
    if lower_bound(Z, new, prior) < before - BOUND_ATOL * max(1.0, abs(before)):
        logger.debug("EM update lowers the bound; keeping the current partition")
        return m_step(Z, state, prior)
    return new


# -----------------------------
# Split / merge
# -----------------------------
def _score(stats: SufficientStats, prior: NWPrior) -> float:
    return float(gammaln(stats.n) + log_marginal_likelihood(stats, prior))


def split_log_ratio(Z: np.ndarray, state: ClusterState, k: int, prior: NWPrior) -> float | None:
    """log Hastings ratio of promoting cluster k's sub-clusters; None when a sub-cluster is too small."""
    idx = np.flatnonzero(state.z == k)
    parts = [Z[idx[state.sub_z[idx] == s]] for s in (0, 1)]
    if min(p.shape[0] for p in parts) < MIN_SUBCLUSTER_SIZE:
        return None
    left, right = (SufficientStats.from_rows(p) for p in parts)
    return np.log(prior.alpha) + _score(left, prior) + _score(right, prior) - _score(left + right, prior)


def merge_log_ratio(Z: np.ndarray, state: ClusterState, k1: int, k2: int, prior: NWPrior) -> float:
    a = SufficientStats.from_rows(Z[state.z == k1])
    b = SufficientStats.from_rows(Z[state.z == k2])
    return -(np.log(prior.alpha) + _score(a, prior) + _score(b, prior) - _score(a + b, prior))


def _accept(log_ratio: float, rng: np.random.Generator) -> bool:
    return bool(log_ratio >= 0 or np.log(rng.random()) < log_ratio)


def _relabel(Z: np.ndarray, state: ClusterState, splits, merges, prior: NWPrior) -> ClusterState:
    """Applies accepted moves: split clusters become two, merged pairs become one."""
    z_old, sub_old = state.z, state.sub_z
    z = np.empty_like(z_old)
    sub_z = np.empty_like(sub_old)
    partner = {}
    for a, b in merges:
        partner[a], partner[b] = (a, 0), (a, 1)
    nxt = 0
    label = {}
    for k in range(state.K):
        idx = np.flatnonzero(z_old == k)
        if k in splits:
            for s in (0, 1):
                child = idx[sub_old[idx] == s]
                z[child] = nxt
                sub_z[child] = principal_split(Z[child])
                nxt += 1
        elif k in partner:
            head, side = partner[k]
            if head not in label:
                label[head] = nxt
                nxt += 1
            z[idx] = label[head]
            sub_z[idx] = side
        else:
            z[idx] = nxt
            sub_z[idx] = sub_old[idx]
            nxt += 1
    return m_step(Z, replace(state, z=z, sub_z=sub_z), prior)


def propose_split(Z: np.ndarray, state: ClusterState, k: int, prior: NWPrior,
                  rng: np.random.Generator) -> tuple:
    """(accepted, state). The state is returned unchanged when rejected or skipped."""
    Z = np.asarray(Z, dtype=FLOAT)
    log_h = split_log_ratio(Z, state, k, prior)
    if log_h is None or not _accept(log_h, rng):
        return False, state
    new = _relabel(Z, state, {k}, [], prior)
    new.accepted_splits += 1
    return True, new


def propose_merge(Z: np.ndarray, state: ClusterState, k1: int, k2: int, prior: NWPrior,
                  rng: np.random.Generator) -> tuple:
    Z = np.asarray(Z, dtype=FLOAT)
    if k1 == k2:
        raise ValueError("propose_merge needs two different clusters")
    if not _accept(merge_log_ratio(Z, state, k1, k2, prior), rng):
        return False, state
    new = _relabel(Z, state, set(), [(min(k1, k2), max(k1, k2))], prior)
    new.accepted_merges += 1
    return True, new


def merge_candidates(state: ClusterState, neighbours: int = MERGE_NEIGHBOURS) -> list:
    """Pairs (a, b), a < b, among each cluster's nearest means, closest first."""
    if state.K < 2:
        return []
    dist = np.linalg.norm(state.means[:, None, :] - state.means[None, :, :], axis=-1)
    np.fill_diagonal(dist, np.inf)
    pairs = set()
    for k in range(state.K):
        for j in np.argsort(dist[k], kind="stable")[:neighbours]:
            if np.isfinite(dist[k, j]):
                pairs.add((min(k, int(j)), max(k, int(j))))
    return sorted(pairs, key=lambda p: (dist[p], p))


def proposal_round(Z: np.ndarray, state: ClusterState, prior: NWPrior,
                   rng: np.random.Generator) -> tuple:
    """Tries a split of every cluster, then merges of nearby untouched pairs. Returns (accepted, state)."""
    splits, merges, touched = set(), [], set()
    for k in range(state.K):
        log_h = split_log_ratio(Z, state, k, prior)
        if log_h is not None and _accept(log_h, rng):
            splits.add(k)
            touched.add(k)
    for a, b in merge_candidates(state):
        if a in touched or b in touched:
            continue
        if _accept(merge_log_ratio(Z, state, a, b, prior), rng):
            merges.append((a, b))
            touched.update((a, b))
    if not splits and not merges:
        return False, state
    logger.info("Proposal round: %d splits, %d merges accepted (K=%d)", len(splits), len(merges), state.K)
    new = _relabel(Z, state, splits, merges, prior)
    new.accepted_splits += len(splits)
    new.accepted_merges += len(merges)
    return True, new


# -----------------------------
# State machine
# -----------------------------
def has_converged(history) -> bool:
    """Last OSCILLATION_WINDOW deltas alternate in sign, or the last delta is negligible."""
    values = np.asarray(history, dtype=FLOAT)
    if values.size < 2:
        return False
    deltas = np.diff(values)
    if abs(deltas[-1]) < CONVERGENCE_RTOL * max(abs(values[-1]), 1e-12):
        return True
    if deltas.size >= OSCILLATION_WINDOW:
        signs = np.sign(deltas[-OSCILLATION_WINDOW:])
        return bool((signs != 0).all() and (signs[1:] != signs[:-1]).all())
    return False


def run_clustering(Z: np.ndarray, prior: NWPrior, steps: int, rng: np.random.Generator,
                   state: ClusterState | None = None, k_init: int = 2,
                   restart: bool = False) -> ClusterState:
    """
    Runs at most `steps` state-machine steps. One step is an EM round in
    CONVERGING or one proposal round in PROPOSAL. Pass the returned state
    back in to resume; restart=True reopens a finished state (new data).
    """
    if steps < 1:
        raise ConfigError(f"Clustering steps must be >= 1, got {steps}")
    Z = np.asarray(Z, dtype=FLOAT)
    if state is None:
        state = kmeans_init(Z, min(k_init, Z.shape[0]), rng, prior)
    elif state.z.shape[0] != Z.shape[0]:
        raise ValueError(f"State covers {state.z.shape[0]} rows, data has {Z.shape[0]}")
    else:
        state = state.copy()
    if restart:
        state.phase = Phase.CONVERGING
        state.history.clear()

    for _ in range(steps):
        if state.phase is Phase.DONE:
            break
        if state.phase is Phase.CONVERGING:
            state = em_round(Z, state, prior)
            state.push_bound(lower_bound(Z, state, prior))
            if has_converged(state.history):
                state.phase = Phase.PROPOSAL
        else:
            accepted, state = proposal_round(Z, state, prior, rng)
            if accepted:
                state.phase = Phase.CONVERGING
                state.history.clear()
            else:
                state.phase = Phase.DONE
    logger.debug("Clustering: K=%d phase=%s bound=%s", state.K, state.phase.value,
                 state.trace[-1] if state.trace else None)
    return state


def assign(Z: np.ndarray, state: ClusterState) -> np.ndarray:
    """Cluster of every row of Z under the current parameters (no update)."""
    return e_step(Z, state)[0]
