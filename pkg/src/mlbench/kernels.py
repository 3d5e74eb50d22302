"""Sampling substrate shared by the estimators.

Metropolis-Hastings kernels, likelihood-constrained prior sampling,
effective sample size, resampling and k-means clustering of samples into
Gaussian-mixture proposals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .densities import GaussianMixture, as_matrix, spd_cholesky
from .errors import (
    ConstrainedSamplingError,
    DegenerateWeightsError,
    InitializationError,
    InvalidArgumentError,
)
from .report import log_mean_exp
from .rng import SeedLike, make_rng, seed_of
from .targets import TargetModel, TemperedView, tempered_log_density

MAX_INIT_DRAWS = 10_000


# ---------------------------------------------------------------------------
# proposals
# ---------------------------------------------------------------------------


class IndependentProposal:
    """Independent MH proposal z ~ q(z), ignoring the current state.

    ``density`` must expose ``logpdf(x)`` and ``sample(rng, n)``; a
    :class:`TargetModel` prior can be wrapped with :meth:`from_prior`.
    """

    symmetric = False
    independent = True

    def __init__(self, density):
        self.density = density

    @classmethod
    def from_prior(cls, model: TargetModel) -> "IndependentProposal":
        return cls(PriorDensity(model))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.asarray(self.density.sample(rng, n), dtype=float)

    def logpdf(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(self.density.logpdf(z), dtype=float).reshape(-1)

    def log_q(self, z: np.ndarray, x: np.ndarray | None = None) -> np.ndarray:
        """log phi(z | x); x is ignored."""
        return self.logpdf(z)


class PriorDensity:
    """Prior of a target model exposed as a normalized density."""

    def __init__(self, model: TargetModel):
        self.model = model

    def logpdf(self, x):
        x, _ = self.model.as_points(x)
        return self.model._lp(x)

    def sample(self, rng, n):
        return self.model.prior_sample(rng, n)


class RandomWalkProposal:
    """Gaussian random-walk proposal z = x + N(0, cov)."""

    symmetric = True
    independent = False

    def __init__(self, cov, dim: int):
        self.cov = as_matrix(cov, dim) if np.ndim(cov) < 2 else np.asarray(cov, dtype=float)
        self.chol = spd_cholesky(self.cov)
        self.dim = dim
        self._log_norm = -0.5 * dim * np.log(2 * np.pi) - np.log(np.diag(self.chol)).sum()

    @classmethod
    def from_scale(cls, scale, dim: int) -> "RandomWalkProposal":
        s = np.broadcast_to(np.asarray(scale, dtype=float), (dim,))
        return cls(np.diag(s**2), dim)

    def step(self, rng: np.random.Generator, x: np.ndarray) -> np.ndarray:
        return x + rng.standard_normal(x.shape) @ self.chol.T

    def log_q(self, z: np.ndarray, x: np.ndarray) -> np.ndarray:
        """log N(z | x, cov) for rows of z and x (broadcast)."""
        d = np.atleast_2d(z) - np.atleast_2d(x)
        u = np.linalg.solve(self.chol, d.T)
        return self._log_norm - 0.5 * np.einsum("ij,ij->j", u, u)


# ---------------------------------------------------------------------------
# Metropolis-Hastings
# ---------------------------------------------------------------------------


@dataclass
class Chain:
    """Output of :func:`run_mh`.

    ``states`` holds the post-burn-in states. ``log_target_values`` are
    log g + beta log l at those states, with the two parts stored
    separately as well.
    """

    states: np.ndarray
    log_target_values: np.ndarray
    log_lik_values: np.ndarray
    log_prior_values: np.ndarray
    acceptance_rate: float
    seed: int
    n_evals: int
    beta: float = 1.0
    n_accepted: int = 0
    n_proposed: int = 0

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.log_target_values))


def _split_target(target) -> tuple[TargetModel, float]:
    if isinstance(target, TemperedView):
        return target.base, float(target.beta)
    if isinstance(target, TargetModel):
        return target, 1.0
    raise InvalidArgumentError("target must be a TargetModel or TemperedView")


def find_initial_point(model: TargetModel, beta: float, rng: np.random.Generator):
    """First prior draw with finite tempered density; each draw is one evaluation."""
    for _ in range(MAX_INIT_DRAWS):
        x = model.prior_sample(rng, 1)
        lp, ll = model.evaluate(x)
        if np.isfinite(tempered_log_density(lp, ll, beta)[0]):
            return x[0], float(lp[0]), float(ll[0])
    raise InitializationError(f"no finite-density point in {MAX_INIT_DRAWS} prior draws")


def run_mh(
    target,
    proposal,
    T: int,
    burn_in: int | None = None,
    seed: SeedLike = None,
    init=None,
) -> Chain:
    """Metropolis-Hastings chain using exactly ``T`` density evaluations.

    The initial state costs one evaluation and each of the remaining
    ``T - 1`` transitions proposes and evaluates one candidate.

    Parameters
    ----------
    target : TargetModel or TemperedView
        Chain targets g * l^beta (beta = 1 for a plain model).
    proposal : IndependentProposal or RandomWalkProposal
    T : int
        Total chain length, including the initial state.
    burn_in : int, optional
        Leading states dropped from the output. Defaults to ``T // 10``.
    seed : int or Generator
    init : array_like, optional
        Starting point. By default the first prior draw with finite density.
    """
    model, beta = _split_target(target)
    T = int(T)
    burn_in = T // 10 if burn_in is None else int(burn_in)
    if T < 1 or not 0 <= burn_in < T:
        raise InvalidArgumentError("need T >= 1 and 0 <= burn_in < T")
    rng = make_rng(seed)
    start = model.n_evals

    if init is None:
        x0, lp0, ll0 = find_initial_point(model, beta, rng)
    else:
        x0 = model.as_points(init)[0][0]
        lp_a, ll_a = model.evaluate(x0[None, :])
        lp0, ll0 = float(lp_a[0]), float(ll_a[0])
        if not np.isfinite(tempered_log_density(lp_a, ll_a, beta)[0]):
            raise InitializationError("initial point has zero target density")

    D = model.dim
    states = np.empty((T, D))
    lps = np.empty(T)
    lls = np.empty(T)
    states[0], lps[0], lls[0] = x0, lp0, ll0
    n_prop = T - 1
    accepted = 0

    if n_prop > 0 and getattr(proposal, "independent", False):
        Z = proposal.sample(rng, n_prop).reshape(n_prop, D)
        lpz, llz = model.evaluate(Z)
        ltz = tempered_log_density(lpz, llz, beta)
        lqz = proposal.log_q(Z)
        lq0 = float(proposal.log_q(x0[None, :])[0])
        log_u = np.log(rng.uniform(size=n_prop))
        with np.errstate(invalid="ignore"):
            score = np.nan_to_num(ltz - lqz, nan=-np.inf).tolist()
        lu = log_u.tolist()
        cur = -1
        cur_score = float(tempered_log_density(np.array([lp0]), np.array([ll0]), beta)[0]) - lq0
        idx = np.empty(n_prop, dtype=np.int64)
        for t in range(n_prop):
            s = score[t]
            if lu[t] < s - cur_score:
                cur, cur_score = t, s
                accepted += 1
            idx[t] = cur
        moved = idx >= 0
        states[1:][moved] = Z[idx[moved]]
        lps[1:][moved] = lpz[idx[moved]]
        lls[1:][moved] = llz[idx[moved]]
        states[1:][~moved] = x0
        lps[1:][~moved] = lp0
        lls[1:][~moved] = ll0
    elif n_prop > 0:
        x, lp, ll = x0.copy(), lp0, ll0
        lt = float(tempered_log_density(np.array([lp]), np.array([ll]), beta)[0])
        eps = rng.standard_normal((n_prop, D)) @ proposal.chol.T
        log_u = np.log(rng.uniform(size=n_prop))
        lu = log_u.tolist()
        for t in range(n_prop):
            z = x + eps[t]
            lpz, llz = model.evaluate_one(z)
            ltz = lpz if beta == 0.0 else lpz + beta * llz
            if ltz == ltz and lu[t] < ltz - lt:
                x, lp, ll, lt = z, lpz, llz, ltz
                accepted += 1
            states[t + 1], lps[t + 1], lls[t + 1] = x, lp, ll

    keep = slice(burn_in, T)
    return Chain(
        states=states[keep],
        log_target_values=tempered_log_density(lps[keep], lls[keep], beta),
        log_lik_values=lls[keep],
        log_prior_values=lps[keep],
        acceptance_rate=accepted / n_prop if n_prop else 1.0,
        seed=seed_of(seed),
        n_evals=model.n_evals - start,
        beta=beta,
        n_accepted=accepted,
        n_proposed=n_prop,
    )


def mh_step_batch(
    model: TargetModel,
    beta: float,
    X: np.ndarray,
    lp: np.ndarray,
    ll: np.ndarray,
    proposal: RandomWalkProposal,
    rng: np.random.Generator,
):
    """One random-walk MH transition applied to every row of ``X``.

    Draws ``len(X)`` normal increments and then ``len(X)`` uniforms, in
    that order, so runs sharing a generator stay aligned. Returns updated
    copies of ``(X, lp, ll)`` and the boolean acceptance mask.
    """
    n = X.shape[0]
    Z = proposal.step(rng, X)
    log_u = np.log(rng.uniform(size=n))
    lpz, llz = model.evaluate(Z)
    with np.errstate(invalid="ignore"):
        delta = tempered_log_density(lpz, llz, beta) - tempered_log_density(lp, ll, beta)
    acc = log_u < np.nan_to_num(delta, nan=-np.inf)
    X, lp, ll = X.copy(), lp.copy(), ll.copy()
    X[acc], lp[acc], ll[acc] = Z[acc], lpz[acc], llz[acc]
    return X, lp, ll, acc


# ---------------------------------------------------------------------------
# weights and resampling
# ---------------------------------------------------------------------------


@dataclass
class ParticleCloud:
    """Weighted particles {theta_n, w_n} at iteration ``k``."""

    points: np.ndarray
    log_weights: np.ndarray
    k: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.log_weights = np.asarray(self.log_weights, dtype=float).reshape(-1)
        if self.points.shape[0] != self.log_weights.shape[0]:
            raise InvalidArgumentError("points and log_weights disagree in length")

    @property
    def n(self) -> int:
        return self.log_weights.shape[0]

    def normalized_weights(self) -> np.ndarray:
        return normalize_log_weights(self.log_weights)

    def log_mean_weight(self) -> float:
        return log_mean_exp(self.log_weights)


def normalize_log_weights(log_weights) -> np.ndarray:
    """Normalized weights exp(lw) / sum exp(lw), computed with a max shift."""
    lw = np.asarray(log_weights, dtype=float).reshape(-1)
    if lw.size == 0 or not np.any(np.isfinite(lw)) or np.any(lw == np.inf) or np.any(np.isnan(lw)):
        raise DegenerateWeightsError("need at least one finite log-weight and no NaN or +inf")
    w = np.exp(lw - lw.max())
    return w / w.sum()


def ess(log_weights) -> float:
    """Effective sample size 1 / sum(wbar^2) of a set of log-weights."""
    w = normalize_log_weights(log_weights)
    return float(1.0 / np.dot(w, w))


def resample_indices(log_weights, n: int, scheme: str, rng: np.random.Generator) -> np.ndarray:
    w = normalize_log_weights(log_weights)
    if scheme == "systematic":
        u = (rng.uniform() + np.arange(n)) / n
        cdf = np.cumsum(w)
        cdf[-1] = 1.0
        return np.searchsorted(cdf, u, side="right").clip(max=w.size - 1)
    if scheme == "multinomial":
        return rng.choice(w.size, size=n, p=w)
    raise InvalidArgumentError(f"unknown resampling scheme {scheme!r}")


def resample(cloud: ParticleCloud, scheme: str = "systematic", seed: SeedLike = None) -> ParticleCloud:
    """Resample ``cloud`` and assign every particle the mean weight.

    After resampling each log-weight equals log((1/N) sum_n w_n), so the
    mean weight (and any evidence estimate built on it) is preserved.
    """
    rng = make_rng(seed)
    idx = resample_indices(cloud.log_weights, cloud.n, scheme, rng)
    lw = np.full(cloud.n, cloud.log_mean_weight())
    extra = {k: np.asarray(v)[idx] for k, v in cloud.extra.items()}
    return ParticleCloud(cloud.points[idx], lw, cloud.k, extra)


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------


class MixtureProposal(GaussianMixture):
    """Gaussian mixture sum_k a_k N(mu_k, Sigma_k + h I) built from samples."""

    def __init__(self, weights, means, base_covs, h: float = 0.0):
        if h < 0:
            raise InvalidArgumentError("bandwidth h must be nonnegative")
        means = np.atleast_2d(np.asarray(means, dtype=float))
        dim = means.shape[1]
        self.base_covs = np.stack([as_matrix(c, dim) for c in base_covs])
        self.h = float(h)
        super().__init__(weights, means, [c + h * np.eye(dim) for c in self.base_covs])


def _kmeanspp(points: np.ndarray, C: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = [points[rng.integers(n)]]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for _ in range(1, C):
        total = d2.sum()
        if total <= 0:
            centers.append(points[rng.integers(n)])
        else:
            centers.append(points[rng.choice(n, p=d2 / total)])
        d2 = np.minimum(d2, np.sum((points - centers[-1]) ** 2, axis=1))
    return np.array(centers)


def _lloyd(points: np.ndarray, centers: np.ndarray, max_iter: int = 100) -> np.ndarray:
    labels = np.full(points.shape[0], -1)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        if np.array_equal(new, labels):
            break
        labels = new
        for k in range(centers.shape[0]):
            members = points[labels == k]
            if members.shape[0]:
                centers[k] = members.mean(axis=0)
    return labels


def kmeans_labels(points: np.ndarray, C: int, seed: SeedLike = None) -> np.ndarray:
    """Lloyd's k-means with k-means++ seeding; returns labels in 0..C'-1 (C' <= C).

    An empty cluster triggers one re-seeding; if clusters are still empty
    they are dropped.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if C < 1 or X.shape[0] < C:
        raise InvalidArgumentError("need C >= 1 and at least C points")
    if C == 1:
        return np.zeros(X.shape[0], dtype=int)
    rng = make_rng(seed)
    labels = _lloyd(X, _kmeanspp(X, C, rng))
    if np.unique(labels).size < C:
        labels = _lloyd(X, _kmeanspp(X, C, rng))
    _, labels = np.unique(labels, return_inverse=True)
    return labels.reshape(-1)


def kmeans_cluster(points, C: int, seed: SeedLike = None, h: float = 0.0) -> MixtureProposal:
    """Cluster ``points`` into a :class:`MixtureProposal`.

    Component weights are proportional to cluster sizes, means are the
    centroids and covariances the within-cluster sample covariances plus
    ``1e-9 I + h I``.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    labels = kmeans_labels(X, C, seed)
    D = X.shape[1]
    weights, means, covs = [], [], []
    for k in range(labels.max() + 1):
        members = X[labels == k]
        weights.append(members.shape[0])
        means.append(members.mean(axis=0))
        if members.shape[0] > 1:
            cov = np.atleast_2d(np.cov(members, rowvar=False, ddof=1))
        else:
            cov = np.zeros((D, D))
        covs.append(cov + 1e-9 * np.eye(D))
    return MixtureProposal(weights, means, covs, h=h)


# ---------------------------------------------------------------------------
# likelihood-constrained prior sampling
# ---------------------------------------------------------------------------


@dataclass
class ConstrainedDraws:
    points: np.ndarray
    log_liks: np.ndarray
    n_accepted: int
    n_tried: int

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_tried if self.n_tried else float("nan")


def rejection_sample_constrained_prior(
    model: TargetModel,
    log_lam: float,
    N: int,
    max_tries: int = 1_000_000,
    seed: SeedLike = None,
    batch: int = 1024,
) -> ConstrainedDraws:
    """Draw ``N`` points from g restricted to {l(y|theta) > lambda} by rejection.

    ``log_lam`` is log(lambda); pass ``-inf`` for lambda = 0. The empirical
    acceptance rate estimates the prior mass Z(lambda). Draws are made in
    batches and scanned in order, which is equivalent to one-at-a-time
    rejection.

    Raises
    ------
    ConstrainedSamplingError
        If fewer than ``N`` points are accepted within ``max_tries`` draws.
    """
    if N < 1 or max_tries < 1:
        raise InvalidArgumentError("N and max_tries must be positive")
    rng = make_rng(seed)
    pts, lls = [], []
    n_acc = n_tried = 0
    while n_acc < N and n_tried < max_tries:
        m = min(batch, max_tries - n_tried)
        X = model.prior_sample(rng, m)
        ll = model.log_lik(X)
        ok = np.flatnonzero(ll > log_lam)
        need = N - n_acc
        if ok.size >= need:
            last = ok[need - 1]
            ok = ok[:need]
            n_tried += last + 1
        else:
            n_tried += m
        pts.append(X[ok])
        lls.append(ll[ok])
        n_acc += ok.size
    if n_acc < N:
        raise ConstrainedSamplingError(f"accepted {n_acc} of {N} points in {n_tried} tries")
    return ConstrainedDraws(np.concatenate(pts), np.concatenate(lls), n_acc, n_tried)
