"""Estimators built on a ladder of power posteriors g * l^beta.

Includes IS with a tempered proposal, stepping-stone sampling, path
sampling and the power-posterior (thermodynamic integration) rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .errors import InvalidArgumentError, UnsupportedTargetError
from .kernels import RandomWalkProposal, run_mh
from .report import EstimateReport, Run
from .rng import SeedLike, make_rng
from .targets import TargetModel


@dataclass(frozen=True)
class TemperatureLadder:
    """Inverse temperatures 0 = beta_0 < ... < beta_K = 1 with beta_k = (k/K)^(1/alpha)."""

    K: int
    alpha: float
    betas: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.betas.size


def make_ladder(K: int, alpha: float = 1.0) -> TemperatureLadder:
    """Ladder of K + 1 inverse temperatures at quantiles of a Beta(alpha, 1)."""
    if int(K) != K or K < 1:
        raise InvalidArgumentError("K must be a positive integer")
    if not 0.0 < alpha <= 1.0:
        raise InvalidArgumentError("alpha must lie in (0, 1]")
    K = int(K)
    betas = (np.arange(K + 1) / K) ** (1.0 / alpha)
    betas[0], betas[-1] = 0.0, 1.0
    return TemperatureLadder(K, float(alpha), betas)


def ladder_from_betas(betas) -> TemperatureLadder:
    """Wrap an explicit increasing sequence from 0 to 1."""
    b = np.asarray(betas, dtype=float)
    if b.ndim != 1 or b.size < 2 or b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
        raise InvalidArgumentError("betas must increase strictly from 0 to 1")
    return TemperatureLadder(b.size - 1, float("nan"), b.copy())


# ---------------------------------------------------------------------------
# rung sampling
# ---------------------------------------------------------------------------


@dataclass
class RungSamples:
    """Per-rung samples and log-likelihoods, shared between estimators."""

    betas: np.ndarray
    points: list
    log_liks: list
    accept_rates: list

    def mean_log_lik(self) -> np.ndarray:
        return np.array([float(np.mean(ll)) for ll in self.log_liks])

    def var_log_lik(self) -> np.ndarray:
        return np.array([float(np.var(ll, ddof=1)) if ll.size > 1 else 0.0 for ll in self.log_liks])


def _resolve_sampler(model: TargetModel, sampler: str) -> str:
    if sampler == "auto":
        return "exact" if model.tempered_sample is not None else "mh"
    if sampler not in ("exact", "mh"):
        raise InvalidArgumentError(f"unknown sampler {sampler!r}")
    if sampler == "exact" and model.tempered_sample is None:
        raise UnsupportedTargetError(f"target {model.name!r} has no exact tempered sampler")
    return sampler


def _rw_scale(X: np.ndarray) -> np.ndarray:
    D = X.shape[1]
    sd = np.std(X, axis=0) if X.shape[0] > 1 else np.ones(D)
    return 2.38 / math.sqrt(D) * np.where(sd > 0, sd, 1e-3)


def sample_rungs(
    model: TargetModel,
    betas,
    n_per_rung: int,
    sampler: str = "auto",
    seed: SeedLike = None,
) -> RungSamples:
    """Draw ``n_per_rung`` points from each power posterior in ``betas``.

    A rung with beta = 0 is sampled directly from the prior. Otherwise the
    exact sampler is used if available (``sampler="exact"`` or ``"auto"``);
    with ``"mh"`` each rung runs a random-walk chain of ``n_per_rung``
    evaluations, warm-started at the previous rung's last state, with
    step 2.38 / sqrt(D) times the previous rung's marginal spread. Every
    rung costs exactly ``n_per_rung`` evaluations.
    """
    n = int(n_per_rung)
    if n < 1:
        raise InvalidArgumentError("n_per_rung must be positive")
    sampler = _resolve_sampler(model, sampler)
    rng = make_rng(seed)
    pts, lls, accs = [], [], []
    prev = None
    for beta in np.asarray(betas, dtype=float):
        if beta == 0.0:
            X = model.prior_sample(rng, n)
            ll = model.log_lik(X)
            acc = 1.0
        elif sampler == "exact":
            X = model.sample_tempered(beta, rng, n)
            ll = model.log_lik(X)
            acc = 1.0
        else:
            if prev is None:
                prev = model.prior_sample(rng, max(n, 2))
                init = None
            else:
                init = prev[-1]
            prop = RandomWalkProposal.from_scale(_rw_scale(prev), model.dim)
            ch = run_mh(model.tempered(beta), prop, n, burn_in=0, seed=rng, init=init)
            X, ll, acc = ch.states, ch.log_lik_values, ch.acceptance_rate
        pts.append(X)
        lls.append(np.asarray(ll, dtype=float))
        accs.append(acc)
        prev = X
    return RungSamples(np.asarray(betas, dtype=float), pts, lls, accs)


def _scaled(beta: float, ll: np.ndarray) -> np.ndarray:
    """beta * ll with 0 * (-inf) = 0."""
    return np.zeros_like(ll) if beta == 0.0 else beta * ll


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def is_p(model: TargetModel, beta: float, N: int, sampler: str = "auto", seed: SeedLike = None) -> EstimateReport:
    """IS with the power posterior at ``beta`` as proposal: sum l^(1-beta) / sum l^(-beta)."""
    if not 0.0 <= beta <= 1.0:
        raise InvalidArgumentError("beta must lie in [0, 1]")
    run = Run(model, seed)
    rs = sample_rungs(run.model, [beta], N, sampler, seed)
    ll = rs.log_liks[0]
    log_Z = float(logsumexp(_scaled(1.0 - beta, ll)) - logsumexp(_scaled(-beta, ll)))
    return run.report("is_p", log_Z, beta=beta, accept_rate=rs.accept_rates[0])


def stepping_stone(
    model: TargetModel,
    ladder: TemperatureLadder,
    N_per_rung: int,
    sampler: str = "auto",
    seed: SeedLike = None,
    samples: RungSamples | None = None,
) -> EstimateReport:
    """Stepping-stone estimate prod_k mean[l(theta_{k-1})^(beta_k - beta_{k-1})].

    Samples come from the rungs beta_0..beta_{K-1}; the posterior rung is
    never sampled. ``diagnostics["log_Z_partial"][k]`` is the estimate of
    log Z(beta_k), with entry 0 equal to 0.
    """
    run = Run(model, seed)
    b = ladder.betas
    if samples is None:
        samples = sample_rungs(run.model, b[:-1], N_per_rung, sampler, seed)
    terms = []
    for k in range(1, b.size):
        ll = samples.log_liks[k - 1]
        terms.append(float(logsumexp(_scaled(b[k] - b[k - 1], ll)) - np.log(ll.size)))
    partial = np.concatenate([[0.0], np.cumsum(terms)])
    return run.report(
        "ss",
        float(partial[-1]),
        log_Z_partial=partial,
        betas=b,
        accept_rate=float(np.mean(samples.accept_rates)),
    )


def power_posteriors(
    model: TargetModel,
    ladder: TemperatureLadder,
    N_per_rung: int,
    order: str | int = 1,
    sampler: str = "auto",
    seed: SeedLike = None,
    samples: RungSamples | None = None,
) -> EstimateReport:
    """Thermodynamic integration of E_beta[log l] over the ladder.

    Parameters
    ----------
    order : {0, 1, "1-corrected"}
        0 is the left Riemann sum, 1 the trapezoidal rule and
        "1-corrected" subtracts sum (dbeta^2 / 12)(V_k - V_{k-1}) using the
        per-rung variances of log l from the same samples.
    samples : RungSamples, optional
        Pre-drawn samples on all K + 1 rungs (the order-0 rule ignores the
        last one).
    """
    order = str(order)
    if order not in ("0", "1", "1-corrected"):
        raise InvalidArgumentError("order must be 0, 1 or '1-corrected'")
    run = Run(model, seed)
    b = ladder.betas
    if samples is None:
        samples = sample_rungs(run.model, b, N_per_rung, sampler, seed)
    E = samples.mean_log_lik()
    db = np.diff(b)
    if order == "0":
        log_Z = float(np.sum(db * E[:-1]))
    else:
        log_Z = float(np.sum(db * 0.5 * (E[:-1] + E[1:])))
        if order == "1-corrected":
            V = samples.var_log_lik()
            log_Z -= float(np.sum(db**2 / 12.0 * (V[1:] - V[:-1])))
    return run.report(f"pp{order}", log_Z, order=order, betas=b, accept_rate=float(np.mean(samples.accept_rates)))


def _beta_density(p_beta) -> tuple:
    """(sampler, logpdf) for p(beta) = 'uniform' or ('beta', a) meaning Beta(a, 1)."""
    if p_beta == "uniform":
        return (lambda rng, n: rng.uniform(size=n)), (lambda b: np.zeros_like(b))
    if isinstance(p_beta, (tuple, list)) and len(p_beta) == 2 and p_beta[0] == "beta":
        a = float(p_beta[1])
        if a <= 0:
            raise InvalidArgumentError("Beta(a, 1) needs a > 0")
        return (lambda rng, n: rng.uniform(size=n) ** (1.0 / a)), (lambda b: stats.beta.logpdf(b, a, 1.0))
    raise InvalidArgumentError("p_beta must be 'uniform' or ('beta', a)")


def path_sampling(
    model: TargetModel,
    N: int,
    p_beta="uniform",
    sampler: str = "auto",
    mh_steps: int = 10,
    seed: SeedLike = None,
) -> EstimateReport:
    """Path sampling along the geometric path: log Z = mean[log l(theta_i) / p(beta_i)].

    Each pair draws beta_i ~ p(beta) and then theta_i from the power
    posterior at beta_i, exactly or by ``mh_steps`` random-walk steps
    (the betas are visited in increasing order so that the chain moves
    gradually from prior to posterior).
    """
    if N < 1:
        raise InvalidArgumentError("N must be positive")
    run = Run(model, seed)
    m = run.model
    sampler = _resolve_sampler(m, sampler)
    rng = make_rng(seed)
    draw_beta, log_p = _beta_density(p_beta)
    betas = np.sort(draw_beta(rng, N))
    lp_beta = np.asarray(log_p(betas), dtype=float)
    if np.any(~np.isfinite(lp_beta)):
        raise InvalidArgumentError("p(beta) is zero or infinite at a drawn beta")
    ll = np.empty(N)
    accs = []
    if sampler == "exact":
        for i, b in enumerate(betas):
            X = m.sample_tempered(b, rng, 1)
            ll[i] = m.log_lik(X)[0]
    else:
        history = m.prior_sample(rng, 2)
        x = history[-1]
        for i, b in enumerate(betas):
            window = history[-50:]
            prop = RandomWalkProposal.from_scale(_rw_scale(window), m.dim)
            ch = run_mh(m.tempered(b), prop, mh_steps, burn_in=mh_steps - 1, seed=rng, init=x)
            x = ch.states[-1]
            ll[i] = ch.log_lik_values[-1]
            accs.append(ch.acceptance_rate)
            history = np.vstack([history, x[None, :]])
    log_Z = float(np.mean(ll / np.exp(lp_beta)))
    return run.report("ps", log_Z, accept_rate=float(np.mean(accs)) if accs else 1.0)
