"""Target models and built-in benchmark problems.

A :class:`TargetModel` bundles a log-prior, a log-likelihood and a prior
sampler. Densities are vectorized over points stored as rows of an
``(n, D)`` array. Every likelihood evaluation goes through the model so
that estimators can report exact evaluation counts.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, special, stats
from scipy.special import logsumexp

from .densities import Gaussian, GaussianMixture, as_matrix, spd_cholesky
from .errors import InvalidArgumentError, ModelEvaluationError, UnsupportedTargetError

ArrayFn = Callable[[np.ndarray], np.ndarray]


class EvalCounter:
    """Thread-safe tally of likelihood evaluations.

    A child counter forwards every increment to its parent, so a model
    view created for one estimator run has an exact private count while
    the shared model keeps the global total.
    """

    def __init__(self, parent: "EvalCounter | None" = None):
        self._n = 0
        self._lock = threading.Lock()
        self._parent = parent

    def add(self, k: int) -> None:
        with self._lock:
            self._n += int(k)
        if self._parent is not None:
            self._parent.add(k)

    @property
    def value(self) -> int:
        return self._n


class TargetModel:
    """Evaluable prior/likelihood pair.

    Parameters
    ----------
    dim : int
        Parameter dimension D.
    log_prior, log_lik : callable
        Vectorized functions mapping an ``(n, D)`` array to ``(n,)`` values.
    prior_sample : callable
        ``prior_sample(rng, n)`` returning an ``(n, D)`` array.
    support : tuple of arrays or None
        Lower and upper corners of an axis-aligned box, or None for R^D.
    per_datum_log_lik : callable, optional
        Maps ``(n, D)`` points to an ``(n, D_y)`` array of log l(y_i | theta).
    exact_log_Z : float, optional
        Closed-form log evidence when known.
    tempered_sample : callable, optional
        ``tempered_sample(beta, rng, n)`` drawing exactly from the power
        posterior g * l^beta (normalized).
    exact_log_Z_beta : callable, optional
        Closed-form log Z(beta) of the power posterior.
    posterior_logpdf : callable, optional
        Normalized posterior log-density, when available in closed form.
    """

    def __init__(
        self,
        dim: int,
        log_prior: ArrayFn,
        log_lik: ArrayFn,
        prior_sample: Callable[[np.random.Generator, int], np.ndarray],
        support: tuple[np.ndarray, np.ndarray] | None = None,
        per_datum_log_lik: ArrayFn | None = None,
        n_data: int | None = None,
        exact_log_Z: float | None = None,
        name: str = "custom",
        params: dict | None = None,
        tempered_sample: Callable[[float, np.random.Generator, int], np.ndarray] | None = None,
        exact_log_Z_beta: Callable[[float], float] | None = None,
        posterior_logpdf: ArrayFn | None = None,
        counter: EvalCounter | None = None,
    ):
        if int(dim) < 1:
            raise InvalidArgumentError("dim must be a positive integer")
        self.dim = int(dim)
        self._log_prior = log_prior
        self._log_lik = log_lik
        self._prior_sample = prior_sample
        if support is not None:
            lo = np.broadcast_to(np.asarray(support[0], dtype=float), (self.dim,)).copy()
            hi = np.broadcast_to(np.asarray(support[1], dtype=float), (self.dim,)).copy()
            if np.any(hi <= lo):
                raise InvalidArgumentError("support box must have positive width")
            support = (lo, hi)
        self.support = support
        self._per_datum = per_datum_log_lik
        self.n_data = n_data
        self.exact_log_Z = exact_log_Z
        self.name = name
        self.params = dict(params or {})
        self.tempered_sample = tempered_sample
        self.exact_log_Z_beta = exact_log_Z_beta
        self.posterior_logpdf = posterior_logpdf
        self.counter = counter if counter is not None else EvalCounter()

    # -- views -------------------------------------------------------------
    def counting(self) -> "TargetModel":
        """Shallow copy with a fresh child evaluation counter."""
        view = object.__new__(TargetModel)
        view.__dict__.update(self.__dict__)
        view.counter = EvalCounter(parent=self.counter)
        return view

    def tempered(self, beta: float) -> "TemperedView":
        return TemperedView(self, beta)

    @property
    def n_evals(self) -> int:
        return self.counter.value

    @property
    def has_per_datum(self) -> bool:
        return self._per_datum is not None

    # -- point handling ----------------------------------------------------
    def as_points(self, theta) -> tuple[np.ndarray, bool]:
        """Return ``(points, scalar)`` with points of shape (n, D).

        A 1-D input is one point, except in dimension 1 where it is read
        as a batch of scalars.
        """
        x = np.asarray(theta, dtype=float)
        if x.ndim == 0:
            if self.dim != 1:
                raise InvalidArgumentError(f"scalar given for a {self.dim}-dimensional target")
            return x.reshape(1, 1), True
        if x.ndim == 1:
            if self.dim == 1:
                return x.reshape(-1, 1), False
            if x.shape[0] != self.dim:
                raise InvalidArgumentError(f"point of length {x.shape[0]}, expected {self.dim}")
            return x.reshape(1, -1), True
        if x.ndim == 2 and x.shape[1] == self.dim:
            return x, False
        raise InvalidArgumentError(f"points of shape {x.shape} for a {self.dim}-dimensional target")

    def in_support(self, x: np.ndarray) -> np.ndarray:
        if self.support is None:
            return np.ones(x.shape[0], dtype=bool)
        lo, hi = self.support
        return ((x >= lo) & (x <= hi)).all(axis=1)

    @staticmethod
    def _out(v: np.ndarray, scalar: bool):
        return float(v[0]) if scalar else v

    # -- raw evaluation on (n, D) arrays -----------------------------------
    def _masked(self, fn: ArrayFn, x: np.ndarray, inside: np.ndarray, what: str) -> np.ndarray:
        if inside.all():
            out = np.asarray(fn(x), dtype=float).reshape(-1)
        else:
            out = np.full(x.shape[0], -np.inf)
            if inside.any():
                out[inside] = np.asarray(fn(x[inside]), dtype=float).reshape(-1)
        if np.isnan(out).any():
            raise ModelEvaluationError(f"{what} returned NaN")
        return out

    def _lp(self, x: np.ndarray, inside: np.ndarray | None = None) -> np.ndarray:
        inside = self.in_support(x) if inside is None else inside
        return self._masked(self._log_prior, x, inside, "log_prior")

    def _ll(self, x: np.ndarray, inside: np.ndarray | None = None) -> np.ndarray:
        self.counter.add(x.shape[0])
        inside = self.in_support(x) if inside is None else inside
        return self._masked(self._log_lik, x, inside, "log_lik")

    def evaluate(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Log-prior and log-likelihood of an (n, D) array (counted)."""
        inside = self.in_support(x)
        return self._lp(x, inside), self._ll(x, inside)

    def evaluate_one(self, x: np.ndarray) -> tuple[float, float]:
        """Counted (log-prior, log-likelihood) of a single point of shape (D,)."""
        self.counter.add(1)
        if self.support is not None:
            lo, hi = self.support
            for v, a, b in zip(x.tolist(), lo.tolist(), hi.tolist()):
                if not a <= v <= b:
                    return -math.inf, -math.inf
        p = x[None, :]
        lp = float(self._log_prior(p)[0])
        ll = float(self._log_lik(p)[0])
        if lp != lp or ll != ll:
            raise ModelEvaluationError("model returned NaN")
        return lp, ll

    # -- public scalar/batch API -------------------------------------------
    def log_prior(self, theta):
        x, s = self.as_points(theta)
        return self._out(self._lp(x), s)

    def log_lik(self, theta):
        x, s = self.as_points(theta)
        return self._out(self._ll(x), s)

    def log_post(self, theta, beta: float = 1.0):
        return log_unnorm_posterior(self, theta, beta)

    def per_datum_log_lik(self, theta) -> np.ndarray:
        """Array of shape (n, D_y) (or (D_y,) for a single point)."""
        if self._per_datum is None:
            raise UnsupportedTargetError(f"target {self.name!r} has no per-datum likelihood")
        x, s = self.as_points(theta)
        self.counter.add(x.shape[0])
        v = np.asarray(self._per_datum(x), dtype=float)
        return v[0] if s else v

    def prior_sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        return np.asarray(self._prior_sample(rng, int(n)), dtype=float).reshape(int(n), self.dim)

    def sample_tempered(self, beta: float, rng: np.random.Generator, n: int) -> np.ndarray:
        """Exact draws from the normalized power posterior at ``beta``."""
        if beta == 0.0:
            return self.prior_sample(rng, n)
        if self.tempered_sample is None:
            raise UnsupportedTargetError(f"target {self.name!r} has no exact tempered sampler")
        return np.asarray(self.tempered_sample(beta, rng, int(n)), dtype=float).reshape(int(n), self.dim)


def tempered_log_density(lp: np.ndarray, ll: np.ndarray, beta) -> np.ndarray:
    """log g + beta * log l with the convention 0 * (-inf) = 0."""
    beta = np.asarray(beta, dtype=float)
    with np.errstate(invalid="ignore"):
        out = lp + beta * ll
    return np.where(beta == 0.0, lp, out)


@dataclass
class TemperedView:
    """Power posterior g(theta) l(y|theta)^beta of a base model.

    ``beta`` normally lies in [0, 1]; values above 1 (anti-tempering) are
    accepted for samplers but have no evidence interpretation.
    """

    base: TargetModel
    beta: float

    def __post_init__(self):
        if not self.beta >= 0.0:
            raise InvalidArgumentError("beta must be nonnegative")

    @property
    def dim(self) -> int:
        return self.base.dim

    def log_density(self, theta):
        x, s = self.base.as_points(theta)
        lp, ll = self.base.evaluate(x)
        return self.base._out(tempered_log_density(lp, ll, self.beta), s)

    def sample_exact(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.base.sample_tempered(self.beta, rng, n)


def log_unnorm_posterior(model: TargetModel, theta, beta: float = 1.0):
    """Return log g(theta) + beta * log l(y|theta).

    Points outside the support give -inf. Each point costs one counted
    evaluation.
    """
    if not 0.0 <= beta <= 1.0:
        raise InvalidArgumentError("beta must lie in [0, 1]")
    x, s = model.as_points(theta)
    lp, ll = model.evaluate(x)
    return model._out(tempered_log_density(lp, ll, beta), s)


# ---------------------------------------------------------------------------
# built-in targets
# ---------------------------------------------------------------------------

_LOG_2PI = math.log(2.0 * math.pi)


def build_std_normal_1d(prior_sd: float = 10.0) -> TargetModel:
    """Unnormalized target pi(theta) = exp(-theta^2 / 2), Z = sqrt(2 pi).

    The target is split as g = N(0, prior_sd^2) and l = pi / g.
    """
    if prior_sd <= 1.0:
        raise InvalidArgumentError("prior_sd must exceed 1 so that l = pi / g is bounded")
    s2 = prior_sd**2
    log_norm_g = -0.5 * _LOG_2PI - math.log(prior_sd)

    def log_prior(x):
        return log_norm_g - 0.5 * x[:, 0] ** 2 / s2

    def log_lik(x):
        return -0.5 * x[:, 0] ** 2 * (1.0 - 1.0 / s2) - log_norm_g

    def prior_sample(rng, n):
        return prior_sd * rng.standard_normal((n, 1))

    def precision(beta):
        return (1.0 - beta) / s2 + beta

    def tempered_sample(beta, rng, n):
        return rng.standard_normal((n, 1)) / math.sqrt(precision(beta))

    def exact_log_Z_beta(beta):
        return (1.0 - beta) * log_norm_g + 0.5 * _LOG_2PI - 0.5 * math.log(precision(beta))

    def posterior_logpdf(x):
        x = np.asarray(x, dtype=float).reshape(-1, 1)
        return -0.5 * _LOG_2PI - 0.5 * x[:, 0] ** 2

    return TargetModel(
        dim=1,
        log_prior=log_prior,
        log_lik=log_lik,
        prior_sample=prior_sample,
        exact_log_Z=0.5 * _LOG_2PI,
        name="stdnormal1d",
        params={"prior_sd": prior_sd},
        tempered_sample=tempered_sample,
        exact_log_Z_beta=exact_log_Z_beta,
        posterior_logpdf=posterior_logpdf,
    )


def _log_ndtr_diff(a: float, b: float) -> float:
    """log(Phi(b) - Phi(a)) for a < b, accurate in both tails."""
    if a > 0:
        a, b = -b, -a
    la, lb = special.log_ndtr(a), special.log_ndtr(b)
    return float(lb + np.log1p(-np.exp(la - lb)))


def build_gauss_uniform(delta: float, sigma: float, data) -> TargetModel:
    """Gaussian likelihood with known sigma and a uniform prior on [-delta, delta].

    The likelihood is (2 pi sigma^2)^(-n/2) exp{-n [(theta - ybar)^2 + s_y] / (2 sigma^2)}
    with s_y the (biased) sample variance, i.e. the product of N(y_i | theta, sigma^2).
    """
    y = np.asarray(data, dtype=float).reshape(-1)
    if y.size == 0:
        raise InvalidArgumentError("data must be nonempty")
    if delta <= 0 or sigma <= 0:
        raise InvalidArgumentError("delta and sigma must be positive")
    n = y.size
    ybar = float(y.mean())
    s_y = float(np.mean((y - ybar) ** 2))
    s2 = sigma**2
    const = -0.5 * n * math.log(2.0 * math.pi * s2) - n * s_y / (2.0 * s2)
    log_g = -math.log(2.0 * delta)

    def log_prior(x):
        return np.full(x.shape[0], log_g)

    def log_lik(x):
        return const - n * (x[:, 0] - ybar) ** 2 / (2.0 * s2)

    def per_datum(x):
        return -0.5 * math.log(2.0 * math.pi * s2) - (y[None, :] - x[:, :1]) ** 2 / (2.0 * s2)

    def prior_sample(rng, k):
        return rng.uniform(-delta, delta, size=(k, 1))

    def tau(beta):
        return sigma / math.sqrt(n * beta)

    def exact_log_Z_beta(beta):
        if beta == 0.0:
            return 0.0
        t = tau(beta)
        return (
            log_g
            + beta * const
            + 0.5 * math.log(2.0 * math.pi * t * t)
            + _log_ndtr_diff((-delta - ybar) / t, (delta - ybar) / t)
        )

    def tempered_sample(beta, rng, k):
        t = tau(beta)
        a, b = (-delta - ybar) / t, (delta - ybar) / t
        return stats.truncnorm.rvs(a, b, loc=ybar, scale=t, size=(k, 1), random_state=rng)

    def posterior_logpdf(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        t = tau(1.0)
        a, b = (-delta - ybar) / t, (delta - ybar) / t
        return stats.truncnorm.logpdf(x, a, b, loc=ybar, scale=t)

    return TargetModel(
        dim=1,
        log_prior=log_prior,
        log_lik=log_lik,
        prior_sample=prior_sample,
        support=(np.array([-delta]), np.array([delta])),
        per_datum_log_lik=per_datum,
        n_data=n,
        exact_log_Z=exact_log_Z_beta(1.0),
        name="gauss-uniform",
        params={"delta": delta, "sigma": sigma, "data": y, "ybar": ybar, "s_y": s_y, "log_lik_max": const},
        tempered_sample=tempered_sample,
        exact_log_Z_beta=exact_log_Z_beta,
        posterior_logpdf=posterior_logpdf,
    )


def _gu_interval_length(model: TargetModel, r: float) -> float:
    delta, ybar = model.params["delta"], model.params["ybar"]
    return max(0.0, min(ybar + r, delta) - max(ybar - r, -delta))


def gauss_uniform_survival(model: TargetModel, log_lam: float) -> float:
    """Analytic prior mass Z(lambda) = P_g(l(y|theta) > lambda) for gauss-uniform."""
    p = model.params
    if log_lam == -np.inf:
        return 1.0
    gap = p["log_lik_max"] - log_lam
    if gap <= 0:
        return 0.0
    r = math.sqrt(2.0 * p["sigma"] ** 2 * gap / model.n_data)
    return _gu_interval_length(model, r) / (2.0 * p["delta"])


def gauss_uniform_log_psi(model: TargetModel, a: float) -> float:
    """Inverse survival: log Psi(a), the log-likelihood level whose prior mass is a."""
    p = model.params
    if not 0.0 < a <= 1.0:
        raise InvalidArgumentError("a must lie in (0, 1]")
    target = 2.0 * p["delta"] * a
    r_hi = 2.0 * p["delta"] + abs(p["ybar"])
    if _gu_interval_length(model, r_hi) <= target:
        r = r_hi
    else:
        r = optimize.brentq(lambda r: _gu_interval_length(model, r) - target, 0.0, r_hi, xtol=1e-14)
    return p["log_lik_max"] - model.n_data * r * r / (2.0 * p["sigma"] ** 2)


def gauss_uniform_data(n: int, seed: int, mean: float = 0.0, sd: float = 3.0) -> np.ndarray:
    """Synthetic observations y_i ~ N(mean, sd^2)."""
    rng = np.random.default_rng(seed)
    return mean + sd * rng.standard_normal(int(n))


def build_gauss_mixture(
    D: int = 1,
    L: float = 1.0,
    alpha_prior: float = 0.5,
    lik_cov=50.0,
    prior_cov=30.0,
    y=-0.5,
) -> TargetModel:
    """Gaussian likelihood N(y | theta, Lambda) with a two-component Gaussian-mixture prior.

    Prior component means are +L*1 and -L*1. The posterior is again a
    two-component mixture with closed-form parameters.
    """
    D = int(D)
    if D < 1:
        raise InvalidArgumentError("D must be at least 1")
    if not 0.0 <= alpha_prior <= 1.0:
        raise InvalidArgumentError("alpha_prior must lie in [0, 1]")
    lam = as_matrix(lik_cov, D)
    spd_cholesky(lam)
    if isinstance(prior_cov, (list, tuple)) and len(prior_cov) == 2 and np.ndim(prior_cov[0]) == 2:
        S = [as_matrix(c, D) for c in prior_cov]
    else:
        S = [as_matrix(prior_cov, D), as_matrix(prior_cov, D)]
    for c in S:
        spd_cholesky(c)
    yv = np.broadcast_to(np.asarray(y, dtype=float), (D,)).copy()
    means = [L * np.ones(D), -L * np.ones(D)]
    alphas = np.array([alpha_prior, 1.0 - alpha_prior])
    active = [k for k in range(2) if alphas[k] > 0]

    prior = GaussianMixture(alphas[active], [means[k] for k in active], [S[k] for k in active])
    lik = Gaussian(yv, lam)

    def components(beta):
        """Power-posterior mixture and log Z(beta) for beta > 0."""
        lam_b = lam / beta
        sign, logdet_lam = np.linalg.slogdet(2.0 * np.pi * lam)
        _, logdet_lam_b = np.linalg.slogdet(2.0 * np.pi * lam_b)
        log_c = -0.5 * beta * logdet_lam + 0.5 * logdet_lam_b
        inv_lam_b = np.linalg.inv(lam_b)
        logz, mus, covs = [], [], []
        for k in active:
            inv_s = np.linalg.inv(S[k])
            cov_post = np.linalg.inv(inv_s + inv_lam_b)
            cov_post = 0.5 * (cov_post + cov_post.T)
            mu_post = cov_post @ (inv_s @ means[k] + inv_lam_b @ yv)
            logz.append(math.log(alphas[k]) + float(Gaussian(means[k], S[k] + lam_b).logpdf(yv)[0]))
            mus.append(mu_post)
            covs.append(cov_post)
        logz = np.array(logz)
        log_Z = float(logsumexp(logz))
        return GaussianMixture(np.exp(logz - log_Z), mus, covs), log_c + log_Z

    posterior, log_Z = components(1.0)

    def tempered_sample(beta, rng, n):
        return components(beta)[0].sample(rng, n)

    def exact_log_Z_beta(beta):
        return 0.0 if beta == 0.0 else components(beta)[1]

    alpha_post = np.zeros(2)
    alpha_post[active] = posterior.weights
    return TargetModel(
        dim=D,
        log_prior=prior.logpdf,
        log_lik=lik.logpdf,
        prior_sample=prior.sample,
        n_data=1,
        exact_log_Z=log_Z,
        name="gauss-mix",
        params={
            "D": D,
            "L": L,
            "alpha_prior": alpha_prior,
            "alpha_post": alpha_post,
            "posterior": posterior,
            "prior": prior,
        },
        tempered_sample=tempered_sample,
        exact_log_Z_beta=exact_log_Z_beta,
        posterior_logpdf=posterior.logpdf,
    )


BOD_T = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 7.0])
BOD_Y = np.array([8.3, 10.3, 19.0, 16.0, 15.6, 19.8])
BOD_LOG_Z = -16.208


def build_bod_target() -> TargetModel:
    """Biochemical-oxygen-demand regression with the noise scale integrated out.

    pi(theta) = (1/360) (1/pi^3) 8 / S(theta)^3 on [0, 60] x [0, 6], where
    S is the residual sum of squares of y_i - theta_1 (1 - exp(-theta_2 t_i)).
    """
    lo, hi = np.array([0.0, 0.0]), np.array([60.0, 6.0])
    log_g = -math.log(360.0)
    log_c = math.log(8.0) - 3.0 * math.log(math.pi)

    def log_prior(x):
        return np.full(x.shape[0], log_g)

    def log_lik(x):
        resid = BOD_Y - x[:, :1] * (1.0 - np.exp(-x[:, 1:2] * BOD_T))
        return log_c - 3.0 * np.log(np.einsum("ij,ij->i", resid, resid))

    def prior_sample(rng, n):
        return rng.uniform(lo, hi, size=(n, 2))

    return TargetModel(
        dim=2,
        log_prior=log_prior,
        log_lik=log_lik,
        prior_sample=prior_sample,
        support=(lo, hi),
        name="bod",
        params={"t": BOD_T, "y": BOD_Y, "reference_log_Z": BOD_LOG_Z},
    )


def build_constant_likelihood(log_c: float, low=-1.0, high=1.0, dim: int = 1) -> TargetModel:
    """Uniform prior on a box with l(y|theta) = c everywhere; Z = c."""
    lo = np.broadcast_to(np.asarray(low, dtype=float), (dim,)).copy()
    hi = np.broadcast_to(np.asarray(high, dtype=float), (dim,)).copy()
    log_g = -float(np.log(hi - lo).sum())

    return TargetModel(
        dim=dim,
        log_prior=lambda x: np.full(x.shape[0], log_g),
        log_lik=lambda x: np.full(x.shape[0], float(log_c)),
        prior_sample=lambda rng, n: rng.uniform(lo, hi, size=(n, dim)),
        support=(lo, hi),
        per_datum_log_lik=lambda x: np.full((x.shape[0], 1), float(log_c)),
        n_data=1,
        exact_log_Z=float(log_c),
        name="constant",
        params={"log_c": float(log_c)},
        tempered_sample=lambda beta, rng, n: rng.uniform(lo, hi, size=(n, dim)),
        exact_log_Z_beta=lambda beta: beta * float(log_c),
    )


# ---------------------------------------------------------------------------
# quadrature oracle
# ---------------------------------------------------------------------------


def grid_quadrature_logZ(
    model: TargetModel,
    nodes_per_dim: int,
    bounds: tuple | None = None,
    beta: float = 1.0,
) -> float:
    """Midpoint-rule estimate of log Z(beta) on a regular grid.

    Parameters
    ----------
    model : TargetModel
        Target with dimension 1 or 2.
    nodes_per_dim : int
        Number of midpoints along each axis (at least 10).
    bounds : (lower, upper), optional
        Integration box. Defaults to the model support, which must then be
        bounded.
    beta : float
        Tempering exponent of the integrand g * l^beta.
    """
    if model.dim > 2:
        raise UnsupportedTargetError("grid quadrature supports dimension 1 or 2 only")
    if nodes_per_dim < 10:
        raise InvalidArgumentError("nodes_per_dim must be at least 10")
    if bounds is None:
        if model.support is None:
            raise UnsupportedTargetError("grid quadrature needs a bounded support or explicit bounds")
        bounds = model.support
    lo = np.broadcast_to(np.asarray(bounds[0], dtype=float), (model.dim,))
    hi = np.broadcast_to(np.asarray(bounds[1], dtype=float), (model.dim,))
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise UnsupportedTargetError("grid quadrature needs finite bounds")
    n = int(nodes_per_dim)
    width = (hi - lo) / n
    axes = [lo[d] + (np.arange(n) + 0.5) * width[d] for d in range(model.dim)]
    log_cell = float(np.log(width).sum())
    if model.dim == 1:
        x = axes[0][:, None]
        lp, ll = model.evaluate(x)
        return float(logsumexp(tempered_log_density(lp, ll, beta))) + log_cell
    partial = []
    chunk = max(1, 2_000_000 // n)
    for start in range(0, n, chunk):
        a = axes[0][start : start + chunk]
        x = np.column_stack([np.repeat(a, n), np.tile(axes[1], a.size)])
        lp, ll = model.evaluate(x)
        partial.append(logsumexp(tempered_log_density(lp, ll, beta)))
    return float(logsumexp(partial)) + log_cell


TARGET_IDS = ("stdnormal1d", "gauss-uniform", "gauss-mix", "bod")


def make_target(target_id: str, **kwargs) -> TargetModel:
    """Build a registered target from string parameters.

    ``gauss-uniform`` accepts ``delta``, ``sigma`` and either ``data`` or
    (``n_data``, ``data_seed``, ``data_mean``, ``data_sd``).
    ``gauss-mix`` accepts ``D``, ``L`` and ``alpha_prior``.
    """
    kw = dict(kwargs)
    if target_id == "stdnormal1d":
        return build_std_normal_1d(prior_sd=float(kw.pop("prior_sd", 10.0)), **_no_extra(kw))
    if target_id == "gauss-uniform":
        delta = float(kw.pop("delta", 10.0))
        sigma = float(kw.pop("sigma", 3.0))
        if "data" in kw:
            data = np.asarray(kw.pop("data"), dtype=float)
        else:
            data = gauss_uniform_data(
                int(kw.pop("n_data", 10)),
                int(kw.pop("data_seed", 0)),
                float(kw.pop("data_mean", 0.0)),
                float(kw.pop("data_sd", sigma)),
            )
        _no_extra(kw)
        return build_gauss_uniform(delta, sigma, data)
    if target_id == "gauss-mix":
        D = int(kw.pop("D", 1))
        L = float(kw.pop("L", 1.0))
        alpha = float(kw.pop("alpha_prior", 0.5))
        _no_extra(kw)
        return build_gauss_mixture(D, L, alpha)
    if target_id == "bod":
        _no_extra(kw)
        return build_bod_target()
    raise InvalidArgumentError(f"unknown target {target_id!r}; choose from {', '.join(TARGET_IDS)}")


def _no_extra(kw: dict) -> dict:
    if kw:
        raise InvalidArgumentError(f"unexpected target arguments: {', '.join(sorted(kw))}")
    return {}


def reference_log_Z(model: TargetModel, nodes_per_dim: int = 2000) -> float:
    """Exact log Z when known, else grid quadrature on a bounded support."""
    if model.exact_log_Z is not None:
        return float(model.exact_log_Z)
    return grid_quadrature_logZ(model, nodes_per_dim)
