"""Importance-sampling estimators of Z and of ratios of normalizing constants.

Proposal and auxiliary densities are objects with ``logpdf(x)`` and, where
sampling is needed, ``sample(rng, n)`` (for instance
:class:`~mlbench.densities.Gaussian`, :class:`~mlbench.kernels.MixtureProposal`
or :class:`~mlbench.kernels.PriorDensity`). Posterior samples may be passed
as a :class:`~mlbench.kernels.Chain`, whose stored density values are
reused, or as a plain array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateWeightsError, InvalidArgumentError
from .kernels import Chain, ess
from .report import EstimateReport, Run, log_mean_exp
from .rng import SeedLike, make_rng
from .targets import TargetModel

LogDensity = Callable[[np.ndarray], np.ndarray]


def _posterior_values(m: TargetModel, samples) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Points, log-prior and log-likelihood of posterior samples plus evaluations already spent."""
    if isinstance(samples, Chain):
        return samples.states, samples.log_prior_values, samples.log_lik_values, samples.n_evals
    S = m.as_points(samples)[0]
    lp, ll = m.evaluate(S)
    return S, lp, ll, 0


def _logpdf(density, x: np.ndarray) -> np.ndarray:
    return np.asarray(density.logpdf(x), dtype=float).reshape(-1)


def _weights_diag(log_w: np.ndarray) -> dict:
    try:
        return {"ess": ess(log_w)}
    except DegenerateWeightsError:
        return {"ess": 0.0}


# ---------------------------------------------------------------------------
# single-proposal estimators
# ---------------------------------------------------------------------------


def naive_mc(model: TargetModel, N: int, seed: SeedLike = None) -> EstimateReport:
    """Prior-sample average of likelihoods, (1/N) sum l(y | theta_i), theta_i ~ g."""
    if N < 1:
        raise InvalidArgumentError("N must be positive")
    run = Run(model, seed)
    rng = make_rng(seed)
    X = run.model.prior_sample(rng, N)
    ll = run.model.log_lik(X)
    return run.report("naive", float(logsumexp(ll) - np.log(N)), **_weights_diag(ll))


def harmonic_mean(model: TargetModel, posterior_samples, seed: SeedLike = None) -> EstimateReport:
    """Harmonic mean of likelihoods over posterior samples, N / sum 1/l(y | theta_i)."""
    run = Run(model, seed)
    _, _, ll, extra = _posterior_values(run.model, posterior_samples)
    infinite = bool(np.any(ll == -np.inf))
    log_Z = -(float(logsumexp(-ll)) - np.log(ll.size))
    diag = {"infinite_variance": infinite, **_weights_diag(-ll)}
    if isinstance(posterior_samples, Chain):
        diag["accept_rate"] = posterior_samples.acceptance_rate
    return run.report("hm", log_Z, extra_evals=extra, **diag)


def is_v1(model: TargetModel, proposal, N: int, seed: SeedLike = None) -> EstimateReport:
    """Unbiased importance sampling (1/N) sum pi(theta_i) / qbar(theta_i) with a normalized qbar."""
    run = Run(model, seed)
    rng = make_rng(seed)
    X = np.asarray(proposal.sample(rng, N), dtype=float).reshape(N, model.dim)
    lq = _logpdf(proposal, X)
    if np.any(lq == -np.inf):
        raise InvalidArgumentError("proposal density is zero at one of its own samples")
    lp, ll = run.model.evaluate(X)
    lw = lp + ll - lq
    return run.report("is1", log_mean_exp(lw), **_weights_diag(lw))


def is_v2(model: TargetModel, log_q: LogDensity, samples, seed: SeedLike = None) -> EstimateReport:
    """Self-normalized likelihood average sum rho_i l_i / sum rho_i with rho = g / q.

    ``samples`` are draws from qbar (possibly by MCMC); ``log_q`` may be
    unnormalized. The result always lies between the smallest and largest
    sampled likelihood.
    """
    run = Run(model, seed)
    m = run.model
    X = m.as_points(samples)[0] if not isinstance(samples, Chain) else samples.states
    if isinstance(samples, Chain):
        lp, ll, extra = samples.log_prior_values, samples.log_lik_values, samples.n_evals
    else:
        lp, ll = m.evaluate(X)
        extra = 0
    lrho = lp - np.asarray(log_q(X), dtype=float).reshape(-1)
    if not np.any(np.isfinite(lrho)):
        raise DegenerateWeightsError("all weights g/q vanish")
    log_Z = float(logsumexp(lrho + ll) - logsumexp(lrho))
    return run.report("is2", log_Z, extra_evals=extra, **_weights_diag(lrho))


def ris(model: TargetModel, posterior_samples, f, seed: SeedLike = None) -> EstimateReport:
    """Reverse (reciprocal) importance sampling 1 / mean[f(theta_i) / pi(theta_i)].

    ``f`` is a normalized auxiliary density, ideally lighter-tailed than
    the posterior.
    """
    run = Run(model, seed)
    S, lp, ll, extra = _posterior_values(run.model, posterior_samples)
    lpi = lp + ll
    if np.any(lpi == -np.inf):
        raise InvalidArgumentError("posterior sample with zero target density")
    lr = _logpdf(f, S) - lpi
    diag = _weights_diag(lr)
    if isinstance(posterior_samples, Chain):
        diag["accept_rate"] = posterior_samples.acceptance_rate
    return run.report("ris", -log_mean_exp(lr), extra_evals=extra, **diag)


def self_is(model: TargetModel, log_q: LogDensity, samples, f, seed: SeedLike = None) -> EstimateReport:
    """Self-normalized IS sum pi/q / sum f/q with qbar-samples and a normalized f."""
    run = Run(model, seed)
    S, lp, ll, extra = _posterior_values(run.model, samples)
    lq = np.asarray(log_q(S), dtype=float).reshape(-1)
    lf = _logpdf(f, S)
    den = logsumexp(lf - lq)
    if den == -np.inf:
        raise DegenerateWeightsError("sum f/q vanishes")
    lw = lp + ll - lq
    return run.report("self_is", float(logsumexp(lw) - den), extra_evals=extra, **_weights_diag(lw))


# ---------------------------------------------------------------------------
# ratio estimators
# ---------------------------------------------------------------------------


@dataclass
class RatioProblem:
    """Two unnormalized log-densities whose normalizing-constant ratio c1/c2 is sought."""

    log_q1: LogDensity
    log_q2: LogDensity
    sample1: Callable[[np.random.Generator, int], np.ndarray] | None = None
    sample2: Callable[[np.random.Generator, int], np.ndarray] | None = None


def _lq(fn: LogDensity, x: np.ndarray) -> np.ndarray:
    return np.asarray(fn(x), dtype=float).reshape(-1)


def pre_umbrella_ratio(problem: RatioProblem, samples2: np.ndarray) -> float:
    """log(c1/c2) = log mean[q1/q2] over qbar2-samples."""
    return log_mean_exp(_lq(problem.log_q1, samples2) - _lq(problem.log_q2, samples2))


def umbrella_ratio(problem: RatioProblem, log_q3: LogDensity, samples3: np.ndarray) -> float:
    """Umbrella estimate log(c1/c2) = log[sum q1/q3 / sum q2/q3] over qbar3-samples."""
    l3 = _lq(log_q3, samples3)
    num = logsumexp(_lq(problem.log_q1, samples3) - l3)
    den = logsumexp(_lq(problem.log_q2, samples3) - l3)
    if den == -np.inf:
        raise DegenerateWeightsError("sum q2/q3 vanishes")
    return float(num - den)


def log_abs_diff(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log|exp(a) - exp(b)| elementwise."""
    hi = np.maximum(a, b)
    gap = -np.abs(a - b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = hi + np.log(-np.expm1(gap))
    return np.where(np.isfinite(hi), out, -np.inf)


def umbrella_two_stage(model: TargetModel, f, N: int, seed: SeedLike = None) -> EstimateReport:
    """Two-stage umbrella sampling of Z with the asymptotically optimal middle density.

    Stage 1 spends ``N // 4`` evaluations on an IS estimate r of Z with
    proposal ``f``. Stage 2 runs an independent MH chain with proposal
    ``f`` on q3 = |pi - r f| for the remaining evaluations and returns
    sum pi/q3 / sum f/q3.
    """
    if N < 8:
        raise InvalidArgumentError("N must be at least 8")
    run = Run(model, seed)
    m = run.model
    rng = make_rng(seed)
    N1 = N // 4
    N2 = N - N1
    X1 = np.asarray(f.sample(rng, N1), dtype=float).reshape(N1, m.dim)
    lp, ll = m.evaluate(X1)
    log_r = log_mean_exp(lp + ll - _logpdf(f, X1))
    if not np.isfinite(log_r):
        raise DegenerateWeightsError("stage-1 estimate is degenerate")

    Z = np.asarray(f.sample(rng, N2), dtype=float).reshape(N2, m.dim)
    lpz, llz = m.evaluate(Z)
    lpi = lpz + llz
    lf = _logpdf(f, Z)
    lq3 = log_abs_diff(lpi, log_r + lf)
    with np.errstate(invalid="ignore"):
        score = np.nan_to_num(lq3 - lf, nan=-np.inf).tolist()
    log_u = np.log(rng.uniform(size=N2)).tolist()
    cur = 0
    idx = np.empty(N2, dtype=np.int64)
    accepted = 0
    for t in range(N2):
        if t > 0 and log_u[t] < score[t] - score[cur]:
            cur = t
            accepted += 1
        idx[t] = cur
    l3 = lq3[idx]
    num = logsumexp(lpi[idx] - l3)
    den = logsumexp(lf[idx] - l3)
    return run.report(
        "umbrella",
        float(num - den),
        stage1_log_Z=log_r,
        accept_rate=accepted / max(N2 - 1, 1),
    )


def bridge_generic(
    problem: RatioProblem,
    log_alpha: LogDensity,
    samples1: np.ndarray,
    samples2: np.ndarray,
) -> float:
    """Bridge estimate log(c1/c2) = log mean_2[q1 alpha] - log mean_1[q2 alpha]."""
    a2 = _lq(log_alpha, samples2)
    num = log_mean_exp(_lq(problem.log_q1, samples2) + a2)
    if samples1 is None or len(samples1) == 0:
        return num
    den = log_mean_exp(_lq(problem.log_q2, samples1) + _lq(log_alpha, samples1))
    if den == -np.inf:
        raise DegenerateWeightsError("bridge denominator vanishes")
    return float(num - den)


# ---------------------------------------------------------------------------
# iterative two-sample estimators
# ---------------------------------------------------------------------------


def _two_samples(run: Run, proposal, posterior_samples, N2: int, seed: SeedLike):
    """Log-target and log-proposal values at posterior samples (N1) and proposal samples (N2)."""
    m = run.model
    if posterior_samples is None:
        lpi1, lq1, extra = np.empty(0), np.empty(0), 0
    else:
        S, lp, ll, extra = _posterior_values(m, posterior_samples)
        lpi1, lq1 = lp + ll, _logpdf(proposal, S)
    if N2 > 0:
        Z = np.asarray(proposal.sample(make_rng(seed), N2), dtype=float).reshape(N2, m.dim)
        lp2, ll2 = m.evaluate(Z)
        lpi2, lq2 = lp2 + ll2, _logpdf(proposal, Z)
    else:
        lpi2, lq2 = np.empty(0), np.empty(0)
    return lpi1, lq1, lpi2, lq2, extra


def _default_z0(run: Run, posterior_samples) -> float:
    """Laplace-type initial guess from the posterior samples (or 0 if unavailable)."""
    from .point import laplace

    if isinstance(posterior_samples, Chain) and len(posterior_samples) > 1:
        rep = laplace(run.model, "chain", posterior_samples)
        if np.isfinite(rep.log_Z_hat):
            return rep.log_Z_hat
    return 0.0


def _iterate(step, log_z0: float, T: int, tol: float) -> tuple[float, list[float]]:
    trace = [float(log_z0)]
    cur = float(log_z0)
    for _ in range(int(T)):
        new = float(step(cur))
        if not np.isfinite(new):
            raise DegenerateWeightsError(f"non-finite iterate after {len(trace) - 1} steps: trace={trace}")
        trace.append(new)
        if abs(new - cur) < tol:
            cur = new
            break
        cur = new
    return cur, trace


def bridge_optimal_iterative(
    model: TargetModel,
    proposal,
    posterior_samples,
    N2: int,
    T_iter: int = 50,
    log_Z0: float | None = None,
    seed: SeedLike = None,
    tol: float = 1e-8,
) -> EstimateReport:
    """Iterative optimal bridge sampling between the posterior and a normalized proposal.

    Each step evaluates
    Z <- mean_z[pi / (N1 pi + N2 Z q)] / mean_theta[q / (N1 pi + N2 Z q)]
    with z ~ qbar and theta ~ P. With N1 = 0 this is plain IS, with
    N2 = 0 it is reverse IS. The per-iteration trace of log Z is stored in
    ``diagnostics["trace"]`` (starting with log Z0).
    """
    run = Run(model, seed)
    lpi1, lq1, lpi2, lq2, extra = _two_samples(run, proposal, posterior_samples, N2, seed)
    N1, N2 = lpi1.size, lpi2.size
    if N1 + N2 == 0:
        raise InvalidArgumentError("need samples from at least one side")
    if log_Z0 is None:
        log_Z0 = _default_z0(run, posterior_samples)
    with np.errstate(divide="ignore"):
        lN1, lN2 = np.log(N1), np.log(N2)

    def step(lz):
        if N2 > 0:
            num = log_mean_exp(lpi2 - np.logaddexp(lN1 + lpi2, lN2 + lz + lq2))
        else:
            num = -lN1
        if N1 > 0:
            den = log_mean_exp(lq1 - np.logaddexp(lN1 + lpi1, lN2 + lz + lq1))
        else:
            den = -lN2 - lz
        return num - den

    log_Z, trace = _iterate(step, log_Z0, T_iter, tol)
    return run.report("bridge", log_Z, extra_evals=extra, trace=trace, iterations=len(trace) - 1)


def _mix_terms(lpi1, lq1, lpi2, lq2):
    lpi = np.concatenate([lpi1, lpi2])
    lq = np.concatenate([lq1, lq2])
    n = lpi.size
    with np.errstate(divide="ignore"):
        ls1, ls2 = np.log(lpi1.size / n), np.log(lpi2.size / n)
    return lpi, lq, ls1, ls2


def mix_is_iterative(
    model: TargetModel,
    proposal,
    posterior_samples,
    N2: int,
    T_iter: int = 50,
    log_Z0: float | None = None,
    seed: SeedLike = None,
    tol: float = 1e-8,
) -> EstimateReport:
    """Deterministic-mixture IS with the posterior density plugged in at the previous iterate.

    Z <- (1/N) sum Z pi / (s1 pi + s2 Z q) over all N1 + N2 samples.
    """
    run = Run(model, seed)
    lpi1, lq1, lpi2, lq2, extra = _two_samples(run, proposal, posterior_samples, N2, seed)
    lpi, lq, ls1, ls2 = _mix_terms(lpi1, lq1, lpi2, lq2)
    if log_Z0 is None:
        log_Z0 = _default_z0(run, posterior_samples)

    def step(lz):
        return log_mean_exp(lz + lpi - np.logaddexp(ls1 + lpi, ls2 + lz + lq))

    log_Z, trace = _iterate(step, log_Z0, T_iter, tol)
    return run.report("mix_is", log_Z, extra_evals=extra, trace=trace, iterations=len(trace) - 1)


def mix_self_is_iterative(
    model: TargetModel,
    proposal,
    posterior_samples,
    N2: int,
    T_iter: int = 50,
    log_Z0: float | None = None,
    seed: SeedLike = None,
    tol: float = 1e-8,
) -> EstimateReport:
    """Self-normalized deterministic-mixture IS, iterated.

    Z <- sum pi / (s1 pi + s2 Z q) / sum q / (s1 pi + s2 Z q).
    """
    run = Run(model, seed)
    lpi1, lq1, lpi2, lq2, extra = _two_samples(run, proposal, posterior_samples, N2, seed)
    lpi, lq, ls1, ls2 = _mix_terms(lpi1, lq1, lpi2, lq2)
    if log_Z0 is None:
        log_Z0 = _default_z0(run, posterior_samples)

    def step(lz):
        mix = np.logaddexp(ls1 + lpi, ls2 + lz + lq)
        return float(logsumexp(lpi - mix) - logsumexp(lq - mix))

    log_Z, trace = _iterate(step, log_Z0, T_iter, tol)
    return run.report("mix_self_is", log_Z, extra_evals=extra, trace=trace, iterations=len(trace) - 1)


def ideal_mix_is(model: TargetModel, proposal, posterior_samples, N2: int, seed: SeedLike = None) -> EstimateReport:
    """Deterministic-mixture IS with the exact normalized posterior density (test oracle)."""
    if model.posterior_logpdf is None:
        raise InvalidArgumentError("target has no closed-form posterior density")
    run = Run(model, seed)
    m = run.model
    S = m.as_points(posterior_samples)[0]
    Z = np.asarray(proposal.sample(make_rng(seed), N2), dtype=float).reshape(N2, m.dim)
    X = np.concatenate([S, Z])
    lp, ll = m.evaluate(X)
    n = X.shape[0]
    lmix = np.logaddexp(
        math.log(S.shape[0] / n) + np.asarray(m.posterior_logpdf(X)).reshape(-1),
        math.log(N2 / n) + _logpdf(proposal, X),
    )
    return run.report("ideal_mix_is", log_mean_exp(lp + ll - lmix))


# ---------------------------------------------------------------------------
# locally restricted
# ---------------------------------------------------------------------------


def _in_box(X: np.ndarray, box) -> np.ndarray:
    if box is None:
        return np.ones(X.shape[0], dtype=bool)
    lo, hi = (np.asarray(b, dtype=float) for b in box)
    return np.all((X >= lo) & (X <= hi), axis=1)


def locally_restricted(
    model: TargetModel,
    proposal,
    posterior_samples,
    N_prop: int,
    box=None,
    mode: str = "IS",
    seed: SeedLike = None,
) -> EstimateReport:
    """Locally-restricted IS or RIS over a box B (None means the whole space).

    IS mode: mean_z[1_B pi / qbar] / mean_theta[1_B].
    RIS mode: mean_z[1_B] / mean_theta[1_B qbar / pi].
    Here z ~ qbar (``N_prop`` draws) and theta ~ P.
    """
    if mode not in ("IS", "RIS"):
        raise InvalidArgumentError("mode must be 'IS' or 'RIS'")
    run = Run(model, seed)
    m = run.model
    S, lp, ll, extra = _posterior_values(m, posterior_samples)
    Z = np.asarray(proposal.sample(make_rng(seed), N_prop), dtype=float).reshape(N_prop, m.dim)
    in_s, in_z = _in_box(S, box), _in_box(Z, box)
    if not in_s.any() or not in_z.any():
        raise DegenerateWeightsError("no sample inside the region on one side")
    if mode == "IS":
        lpz, llz = m.evaluate(Z)
        lw = np.where(in_z, lpz + llz - _logpdf(proposal, Z), -np.inf)
        log_Z = log_mean_exp(lw) - math.log(in_s.mean())
    else:
        lr = np.where(in_s, _logpdf(proposal, S) - (lp + ll), -np.inf)
        log_Z = math.log(in_z.mean()) - log_mean_exp(lr)
    return run.report(f"lr_{mode.lower()}", float(log_Z), extra_evals=extra)
