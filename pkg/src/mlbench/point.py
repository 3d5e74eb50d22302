"""Deterministic approximations and candidate-identity estimators.

The candidate identity Z = pi(theta*) / P(theta*) holds at any point
theta*; the estimators here differ in how the normalized posterior
density P(theta*) is approximated.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize
from scipy.special import logsumexp

from .errors import DegenerateWeightsError, InvalidArgumentError
from .kernels import Chain, run_mh
from .report import EstimateReport, Run
from .rng import SeedLike, make_rng
from .targets import TargetModel, tempered_log_density

_LOG_2PI = math.log(2.0 * math.pi)


def _log_post(model: TargetModel, x: np.ndarray) -> np.ndarray:
    lp, ll = model.evaluate(np.atleast_2d(x))
    return tempered_log_density(lp, ll, 1.0)


def _gaussian_log_volume(cov: np.ndarray) -> tuple[float, bool]:
    """0.5 * log|2 pi cov|, regularizing a non-SPD matrix by 1e-8 I."""
    cov = 0.5 * (cov + cov.T)
    regularized = False
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        regularized = True
        L = np.linalg.cholesky(cov + 1e-8 * np.eye(cov.shape[0]))
    return 0.5 * cov.shape[0] * _LOG_2PI + float(np.log(np.diag(L)).sum()), regularized


# ---------------------------------------------------------------------------
# Laplace
# ---------------------------------------------------------------------------


def find_mode(model: TargetModel, n_restarts: int = 20, seed: SeedLike = None) -> tuple[np.ndarray, float]:
    """Maximize log pi by Nelder-Mead from ``n_restarts`` prior draws."""
    rng = make_rng(seed)

    def neg(x):
        v = _log_post(model, x)[0]
        return -v if np.isfinite(v) else 1e300

    best_x, best_f = None, np.inf
    for x0 in model.prior_sample(rng, n_restarts):
        res = optimize.minimize(
            neg, x0, method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-13, "maxiter": 4000 * model.dim}
        )
        if res.fun < best_f:
            best_x, best_f = res.x, res.fun
    return np.asarray(best_x, dtype=float), -float(best_f)


def fd_hessian(f, x: np.ndarray, rel_step: float = 1e-4) -> np.ndarray:
    """Central finite-difference Hessian with step ``rel_step * max(|x_i|, 1)``."""
    x = np.asarray(x, dtype=float)
    D = x.size
    h = rel_step * np.maximum(np.abs(x), 1.0)
    H = np.empty((D, D))
    f0 = f(x)
    for i in range(D):
        ei = np.zeros(D)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i + 1, D):
            ej = np.zeros(D)
            ej[j] = h[j]
            v = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * h[i] * h[j])
            H[i, j] = H[j, i] = v
    return H


def laplace(
    model: TargetModel,
    mode_source: str = "optimize",
    chain=None,
    center: str = "mean",
    n_restarts: int = 20,
    seed: SeedLike = None,
) -> EstimateReport:
    """Laplace approximation log Z = (D/2) log 2 pi + (1/2) log|Sigma| + log pi(theta_hat).

    Parameters
    ----------
    mode_source : {"optimize", "chain"}
        ``optimize`` locates the mode numerically and uses the inverse of
        the negative finite-difference Hessian. ``chain`` (Laplace-Metropolis)
        uses the sample covariance of ``chain`` (a :class:`Chain` or an
        array of posterior samples).
    center : {"mean", "best"}
        Chain mode only. ``mean`` evaluates pi at the sample mean (one extra
        evaluation); ``best`` uses the highest-density chain state.
    """
    run = Run(model, seed)
    m = run.model
    diag: dict = {}
    if mode_source == "optimize":
        theta, log_pi = find_mode(m, n_restarts, seed)

        def f(x):
            return float(_log_post(m, x)[0])

        cov = -np.linalg.inv(np.atleast_2d(fd_hessian(f, theta)))
    elif mode_source == "chain":
        if chain is None or len(chain) == 0:
            raise InvalidArgumentError("chain mode needs nonempty posterior samples")
        is_chain = isinstance(chain, Chain)
        S = chain.states if is_chain else m.as_points(chain)[0]
        cov = np.atleast_2d(np.cov(S, rowvar=False)) if S.shape[0] > 1 else np.zeros((m.dim, m.dim))
        if center == "mean":
            theta = S.mean(axis=0)
            log_pi = float(_log_post(m, theta)[0])
        elif center == "best":
            if is_chain:
                b = chain.best_index
                theta, log_pi = S[b], float(chain.log_target_values[b])
            else:
                v = _log_post(m, S)
                b = int(np.argmax(v))
                theta, log_pi = S[b], float(v[b])
        else:
            raise InvalidArgumentError(f"unknown center {center!r}")
        if is_chain:
            diag["accept_rate"] = chain.acceptance_rate
    else:
        raise InvalidArgumentError(f"unknown mode_source {mode_source!r}")
    log_vol, reg = _gaussian_log_volume(cov)
    diag.update(theta_hat=theta, cov=cov, regularized=reg)
    extra = chain.n_evals if isinstance(chain, Chain) and mode_source == "chain" else 0
    return run.report("laplace", log_vol + log_pi, extra_evals=extra, **diag)


# ---------------------------------------------------------------------------
# information criteria
# ---------------------------------------------------------------------------


def bic(log_lik_max: float, dim: int, n_data: int) -> float:
    """Bayesian information criterion D log n - 2 log l_max."""
    return dim * math.log(n_data) - 2.0 * log_lik_max


def bic_log_evidence(log_lik_max: float, dim: int, n_data: int) -> float:
    """BIC approximation log Z ~ -BIC / 2."""
    return -0.5 * bic(log_lik_max, dim, n_data)


def aic(log_lik_max: float, dim: int) -> float:
    """Akaike information criterion 2 D - 2 log l_max."""
    return 2.0 * dim - 2.0 * log_lik_max


def dic(log_liks, log_lik_at_mean: float, flip_plugin_sign: bool = False) -> float:
    """Deviance information criterion from posterior log-likelihood samples.

    The standard form is -(4/N) sum log l(theta_n) + 2 log l(theta_bar).
    ``flip_plugin_sign=True`` flips the sign of the second term.
    """
    ll = np.asarray(log_liks, dtype=float)
    if ll.size == 0:
        raise InvalidArgumentError("need at least one sample")
    sign = -2.0 if flip_plugin_sign else 2.0
    return float(-4.0 * ll.mean() + sign * log_lik_at_mean)


def dic_from_chain(model: TargetModel, chain: Chain, flip_plugin_sign: bool = False) -> float:
    """DIC of a chain, evaluating the likelihood once at the chain mean."""
    theta_bar = chain.states.mean(axis=0)
    return dic(chain.log_lik_values, float(model.log_lik(theta_bar[None, :])[0]), flip_plugin_sign)


def max_log_lik(model: TargetModel, n_restarts: int = 20, seed: SeedLike = None) -> float:
    """Numerical maximum of log l over the support (Nelder-Mead restarts)."""
    rng = make_rng(seed)

    def neg(x):
        v = model.log_lik(np.atleast_2d(x))[0]
        return -v if np.isfinite(v) else 1e300

    best = -np.inf
    for x0 in model.prior_sample(rng, n_restarts):
        res = optimize.minimize(neg, x0, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-13})
        best = max(best, -res.fun)
    return float(best)


# ---------------------------------------------------------------------------
# KDE candidate
# ---------------------------------------------------------------------------


def silverman_bandwidth(samples: np.ndarray) -> float:
    """Silverman's rule with the average marginal standard deviation."""
    S = np.atleast_2d(samples)
    M, D = S.shape
    sd = float(np.mean(np.std(S, axis=0, ddof=1))) if M > 1 else 1.0
    return sd * (4.0 / (D + 2.0)) ** (1.0 / (D + 4.0)) * M ** (-1.0 / (D + 4.0))


def kde_logpdf(x: np.ndarray, centers: np.ndarray, h: float) -> np.ndarray:
    """log of (1/M) sum_m N(x | mu_m, h^2 I) for rows of x."""
    x = np.atleast_2d(x)
    M, D = centers.shape
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return logsumexp(-0.5 * d2 / h**2, axis=1) - math.log(M) - 0.5 * D * math.log(2 * math.pi * h * h)


def kde_candidate(
    model: TargetModel,
    posterior_samples,
    eval_points=None,
    h: float | None = None,
    seed: SeedLike = None,
) -> EstimateReport:
    """Candidate estimator pi(theta*) / P_kde(theta*) averaged over evaluation points.

    ``posterior_samples`` may be a :class:`Chain` (its best state is the
    default evaluation point) or an array (then pi is evaluated at every
    sample to find the best one).
    """
    run = Run(model, seed)
    m = run.model
    if isinstance(posterior_samples, Chain):
        S = posterior_samples.states
        best = S[posterior_samples.best_index]
    else:
        S = np.atleast_2d(np.asarray(posterior_samples, dtype=float))
        if S.shape[1] != m.dim:
            S = S.reshape(-1, m.dim)
        best = None
    if S.shape[0] < 1:
        raise InvalidArgumentError("need at least one sample")
    h = silverman_bandwidth(S) if h is None else float(h)
    if h <= 0:
        raise InvalidArgumentError("bandwidth must be positive")
    if eval_points is None:
        if best is None:
            best = S[int(np.argmax(_log_post(m, S)))]
        pts = best[None, :]
    else:
        pts = m.as_points(eval_points)[0]
    log_p = kde_logpdf(pts, S, h)
    log_pi = _log_post(m, pts)
    ok = np.isfinite(log_p) & np.isfinite(log_pi)
    if not ok.any():
        raise DegenerateWeightsError("KDE density vanishes at every evaluation point")
    vals = log_pi[ok] - log_p[ok]
    return run.report("kde", float(logsumexp(vals) - math.log(vals.size)), h=h, n_points=int(ok.sum()))


# ---------------------------------------------------------------------------
# Chib
# ---------------------------------------------------------------------------


def _draw_from(proposal, rng: np.random.Generator, x: np.ndarray, n: int) -> np.ndarray:
    if proposal.independent:
        return proposal.sample(rng, n)
    return proposal.step(rng, np.repeat(x[None, :], n, axis=0))


def _log_q(proposal, z: np.ndarray, x: np.ndarray) -> np.ndarray:
    """log phi(z | x), rows broadcast."""
    if proposal.independent:
        return proposal.log_q(z)
    return proposal.log_q(z, x)


def chib(
    model: TargetModel,
    proposal,
    theta_star=None,
    N1: int = 5000,
    N2: int = 5000,
    seed: SeedLike = None,
    chain: Chain | None = None,
    fair: bool = False,
) -> EstimateReport:
    """Chib-Jeliazkov estimator from a Metropolis-Hastings run.

    P(theta*) is estimated by
    mean_i[alpha(theta_i, theta*) phi(theta* | theta_i)] / mean_j[alpha(theta*, v_j)]
    with theta_i from the MH chain and v_j ~ phi(. | theta*).

    Parameters
    ----------
    proposal : IndependentProposal or RandomWalkProposal
        The MH proposal phi, also used for the v_j.
    theta_star : array_like, optional
        Evaluation point. Defaults to the best chain state, or to a prior
        draw when ``fair`` is set.
    N1, N2 : int
        Chain length (ignored when ``chain`` is supplied) and number of v_j.
    chain : Chain, optional
        Existing chain produced with ``proposal``; its evaluations are
        added to the reported count.
    """
    run = Run(model, seed)
    m = run.model
    rng = make_rng(seed)
    extra = 0
    if chain is None:
        chain = run_mh(m, proposal, N1, burn_in=0, seed=make_rng(seed, 1))
    else:
        extra = chain.n_evals
    S, lpi_S = chain.states, chain.log_target_values
    if theta_star is None:
        theta_star = model.prior_sample(rng, 1)[0] if fair else S[chain.best_index]
    ts = m.as_points(theta_star)[0]
    lpi_star = float(_log_post(m, ts)[0])
    if not np.isfinite(lpi_star):
        raise DegenerateWeightsError("pi(theta*) is zero")

    # numerator of P(theta*): alpha(theta_i, theta*) phi(theta* | theta_i)
    lq_star_given_S = _log_q(proposal, np.repeat(ts, S.shape[0], axis=0), S)
    lq_S_given_star = _log_q(proposal, S, np.repeat(ts, S.shape[0], axis=0))
    with np.errstate(invalid="ignore"):
        log_ratio = (lpi_star + lq_S_given_star) - (lpi_S + lq_star_given_S)
    log_alpha = np.minimum(0.0, np.nan_to_num(log_ratio, nan=-np.inf))
    log_num = logsumexp(log_alpha + lq_star_given_S) - math.log(S.shape[0])

    V = _draw_from(proposal, rng, ts[0], N2)
    lpi_V = _log_post(m, V)
    lq_V_given_star = _log_q(proposal, V, np.repeat(ts, N2, axis=0))
    lq_star_given_V = _log_q(proposal, np.repeat(ts, N2, axis=0), V)
    with np.errstate(invalid="ignore"):
        log_ratio_v = (lpi_V + lq_star_given_V) - (lpi_star + lq_V_given_star)
    log_alpha_v = np.minimum(0.0, np.nan_to_num(log_ratio_v, nan=-np.inf))
    log_den = logsumexp(log_alpha_v) - math.log(N2)

    if not np.isfinite(log_num):
        return run.report("chib", -np.inf, extra_evals=extra, degenerate=True, theta_star=ts[0])
    log_p = log_num - log_den
    return run.report(
        "chib",
        lpi_star - log_p,
        extra_evals=extra,
        theta_star=ts[0],
        accept_rate=chain.acceptance_rate,
        degenerate=False,
    )


# ---------------------------------------------------------------------------
# interpolant
# ---------------------------------------------------------------------------


def _kernel_matrix(A: np.ndarray, B: np.ndarray, kernel: str, h: float) -> np.ndarray:
    D = A.shape[1]
    diff = A[:, None, :] - B[None, :, :]
    if kernel == "gaussian":
        d2 = (diff**2).sum(axis=2)
        return np.exp(-0.5 * d2 / h**2) / (2 * math.pi * h * h) ** (D / 2)
    if kernel == "triangular":
        return np.prod(np.clip(1.0 - np.abs(diff) / h, 0.0, None) / h, axis=2)
    raise InvalidArgumentError(f"unknown kernel {kernel!r}")


def interpolative_estimate(
    model: TargetModel,
    nodes,
    kernel: str = "gaussian",
    h: float = 1.0,
    seed: SeedLike = None,
) -> EstimateReport:
    """Integrate a kernel interpolant of pi through the given nodes.

    Solves K beta = pi(nodes) with normalized kernels so that the integral
    of the interpolant is sum(beta). A ridge of 1e-8 is added when
    cond(K) > 1e12.
    """
    run = Run(model, seed)
    m = run.model
    X = m.as_points(nodes)[0]
    n = X.shape[0]
    if n > 2000:
        raise InvalidArgumentError("at most 2000 nodes are supported")
    if h <= 0:
        raise InvalidArgumentError("bandwidth must be positive")
    if np.unique(X, axis=0).shape[0] != n:
        raise InvalidArgumentError("nodes must be distinct")
    log_pi = _log_post(m, X)
    shift = float(np.max(log_pi))
    if not np.isfinite(shift):
        raise DegenerateWeightsError("pi vanishes at every node")
    y = np.exp(log_pi - shift)
    K = _kernel_matrix(X, X, kernel, h)
    cond = float(np.linalg.cond(K))
    ridge = cond > 1e12
    if ridge:
        K = K + 1e-8 * np.eye(n)
    coef = np.linalg.solve(K, y)
    total = float(coef.sum())
    log_Z = math.log(total) + shift if total > 0 else float("nan")
    return run.report(
        "interpolant", log_Z, coef=coef * math.exp(shift) if shift < 700 else coef, log_scale=shift,
        condition_number=cond, ridge=ridge, negative_integral=total <= 0,
    )


def interpolant_eval(nodes: np.ndarray, coef: np.ndarray, x, kernel: str = "gaussian", h: float = 1.0) -> np.ndarray:
    """Evaluate sum_i coef_i k(x, node_i) at the rows of x."""
    nodes = np.atleast_2d(nodes)
    x = np.asarray(x, dtype=float).reshape(-1, nodes.shape[1])
    return _kernel_matrix(x, nodes, kernel, h) @ coef
