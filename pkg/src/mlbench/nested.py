"""Vertical-likelihood quantities and the standard nested sampling estimator.

Nested sampling writes Z as the integral over a in [0, 1] of Psi(a), the
likelihood level whose prior survival mass Z(lambda) = P_g(l > lambda)
equals a. The live-point set shrinks the mass geometrically, by about
exp(-1/N) per iteration, which gives the abscissas of a quadrature rule.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import ConstrainedSamplingError, InvalidArgumentError
from .report import EstimateReport, Run
from .rng import SeedLike, make_rng
from .targets import TargetModel

TRACE_COLUMNS = ("i", "lambda_min", "a_hat", "increment")
REJECTION_LIMIT = 1000
WALK_STEPS = 20


def survival_mass(model: TargetModel, lam: float, N_mc: int = 10_000, seed: SeedLike = None, log: bool = False) -> float:
    """Monte Carlo estimate of Z(lambda) = P(l(y | theta) > lambda) with theta ~ g.

    ``lam`` is lambda (>= 0), or log(lambda) when ``log`` is set.
    """
    if N_mc < 1:
        raise InvalidArgumentError("N_mc must be positive")
    if log:
        log_lam = float(lam)
    else:
        if lam < 0:
            raise InvalidArgumentError("lambda must be nonnegative")
        log_lam = math.log(lam) if lam > 0 else -math.inf
    rng = make_rng(seed)
    ll = model.log_lik(model.prior_sample(rng, N_mc))
    return float(np.mean(ll > log_lam))


def ns_quadrature(lam_seq, a_seq) -> float:
    """Quadrature sum_i (a_{i-1} - a_i) lambda_i with a_0 = 1.

    Parameters
    ----------
    lam_seq : array_like
        Nondecreasing likelihood levels lambda_1..lambda_I.
    a_seq : array_like
        Decreasing prior masses a_1..a_I in [0, 1).
    """
    lam = np.asarray(lam_seq, dtype=float).reshape(-1)
    a = np.asarray(a_seq, dtype=float).reshape(-1)
    if lam.size != a.size or lam.size == 0:
        raise InvalidArgumentError("lam_seq and a_seq must be nonempty and of equal length")
    if np.any(np.diff(lam) < 0):
        raise InvalidArgumentError("lam_seq must be nondecreasing")
    full = np.concatenate([[1.0], a])
    if np.any(np.diff(full) >= 0) or a[-1] < 0:
        raise InvalidArgumentError("a_seq must decrease strictly from a_0 = 1 and stay nonnegative")
    return float(np.sum(-np.diff(full) * lam))


@dataclass
class NestedTrace:
    """Dead points of a nested sampling run.

    Attributes hold log(lambda_min), log(a_hat) and the log of each
    quadrature increment (a_{i-1} - a_i) lambda_min, for i = 1..I.
    """

    log_lambda_min: list = field(default_factory=list)
    log_a_hat: list = field(default_factory=list)
    log_increment: list = field(default_factory=list)
    dead_points: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.log_lambda_min)

    def rows(self):
        for i, (l, a, inc) in enumerate(zip(self.log_lambda_min, self.log_a_hat, self.log_increment), start=1):
            yield i, math.exp(l), math.exp(a), math.exp(inc)

    def to_csv(self, path) -> None:
        """Write columns ``i, lambda_min, a_hat, increment`` (linear scale)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for i, lam, a, inc in self.rows():
                w.writerow([i, repr(lam), repr(a), repr(inc)])


class _PriorStream:
    """Prior draws evaluated in batches and consumed strictly in order."""

    def __init__(self, model: TargetModel, rng: np.random.Generator, batch: int = 256, max_evals=None):
        self.model, self.rng, self.batch = model, rng, batch
        self.max_evals = max_evals
        self.X = np.empty((0, model.dim))
        self.ll = np.empty(0)
        self.pos = 0

    def next_above(self, log_lam: float, max_tries: int):
        """First unread draw with log l > log_lam, or None after ``max_tries`` draws."""
        tries = 0
        while tries < max_tries:
            if self.pos >= self.ll.size:
                size = self.batch
                if self.max_evals is not None:
                    size = min(size, self.max_evals - self.model.n_evals)
                    if size <= 0:
                        return None
                self.X = self.model.prior_sample(self.rng, size)
                self.ll = self.model.log_lik(self.X)
                self.pos = 0
            window = self.ll[self.pos : self.pos + (max_tries - tries)]
            hit = np.flatnonzero(window >= log_lam)
            if hit.size:
                j = self.pos + int(hit[0])
                self.pos = j + 1
                return self.X[j].copy(), float(self.ll[j])
            tries += window.size
            self.pos += window.size
        return None


def _constrained_walk(model, start, log_lam, scale, rng, steps=WALK_STEPS):
    """Random-walk MH on g restricted to {log l > log_lam}; returns point, log l, accepted moves."""
    x = start.copy()
    lp_x = float(model.log_prior(x[None, :])[0])
    ll_x = np.nan
    acc = 0
    eps = rng.standard_normal((steps, x.size)) * scale
    log_u = np.log(rng.uniform(size=steps))
    for s in range(steps):
        z = x + eps[s]
        lpz, llz = model.evaluate_one(z)
        if llz >= log_lam and log_u[s] < lpz - lp_x:
            x, lp_x, ll_x = z, lpz, llz
            acc += 1
    return x, ll_x, acc


def nested_sampling(
    model: TargetModel,
    N_live: int = 500,
    constrained_sampler: str = "mcmc-fallback",
    stop_tol: float = 1e-6,
    max_iter: int = 100_000,
    seed: SeedLike = None,
    shrinkage: str = "exp",
    trace_csv=None,
    max_evals: int | None = None,
) -> EstimateReport:
    """Standard nested sampling, Z = sum_i (a_{i-1} - a_i) lambda_min^(i).

    At iteration i the live point with the lowest likelihood (lowest
    index among ties) is recorded as lambda_min^(i) and replaced by a
    prior draw with l > lambda_min^(i). The prior mass is estimated by
    a_i = exp(-i / N) (``shrinkage="exp"``) or (N / (N + 1))^i
    (``shrinkage="mean"``). The run stops when a_i * max(live l) falls
    below ``stop_tol`` times the current estimate, or after ``max_iter``
    iterations.

    Parameters
    ----------
    constrained_sampler : {"rejection", "mcmc-fallback"}
        ``rejection`` scans fresh prior draws until one exceeds the
        threshold (at most 10^6 per iteration). ``mcmc-fallback`` does the
        same but, once an iteration needs more than 1000 draws, switches
        for good to 20 random-walk steps from a random surviving live
        point with step size half the live points' spread.
    trace_csv : path, optional
        Where to write the dead-point trace.
    max_evals : int, optional
        Evaluation budget; the run stops early (``stopped_by="budget"``)
        rather than exceed it.

    Raises
    ------
    ConstrainedSamplingError
        When no valid replacement can be produced; the partial trace is
        attached as ``exc.trace``.
    """
    if N_live < 2:
        raise InvalidArgumentError("N_live must be at least 2")
    if constrained_sampler not in ("rejection", "mcmc-fallback"):
        raise InvalidArgumentError(f"unknown constrained_sampler {constrained_sampler!r}")
    if shrinkage == "exp":
        log_t = -1.0 / N_live
    elif shrinkage == "mean":
        log_t = math.log(N_live / (N_live + 1.0))
    else:
        raise InvalidArgumentError("shrinkage must be 'exp' or 'mean'")
    if stop_tol <= 0 or max_iter < 1:
        raise InvalidArgumentError("need stop_tol > 0 and max_iter >= 1")
    run = Run(model, seed)
    m = run.model
    rng = make_rng(seed)
    if max_evals is not None and max_evals < N_live:
        raise InvalidArgumentError("max_evals must cover the initial live points")
    stream = _PriorStream(m, rng, max_evals=max_evals)
    live = m.prior_sample(rng, N_live)
    live_ll = m.log_lik(live)
    log_width_factor = math.log(-math.expm1(log_t))
    trace = NestedTrace()
    log_Z = -math.inf
    fallback_at = None
    walk_acc = walk_steps = 0
    stopped_by = "max_iter"
    per_iter_limit = REJECTION_LIMIT if constrained_sampler == "mcmc-fallback" else 1_000_000

    for i in range(1, max_iter + 1):
        j = int(np.argmin(live_ll))
        log_lam = float(live_ll[j])
        log_inc = (i - 1) * log_t + log_width_factor + log_lam
        log_Z = float(np.logaddexp(log_Z, log_inc))
        trace.log_lambda_min.append(log_lam)
        trace.log_a_hat.append(i * log_t)
        trace.log_increment.append(log_inc)
        trace.dead_points.append(live[j].copy())

        if i * log_t + float(np.max(live_ll)) < math.log(stop_tol) + log_Z:
            stopped_by = "tol"
            break
        if i == max_iter:
            break

        new = None
        if fallback_at is None:
            new = stream.next_above(log_lam, per_iter_limit)
            if new is None and max_evals is not None and m.n_evals >= max_evals:
                stopped_by = "budget"
                break
            if new is None and constrained_sampler == "mcmc-fallback":
                fallback_at = i
        if new is None and max_evals is not None and max_evals - m.n_evals < WALK_STEPS:
            stopped_by = "budget"
            break
        if new is None and fallback_at is not None:
            others = np.flatnonzero(np.arange(N_live) != j)
            scale = 0.5 * np.std(live[others], axis=0)
            start = live[others[rng.integers(others.size)]]
            for _ in range(5):
                if max_evals is not None and max_evals - m.n_evals < WALK_STEPS:
                    break
                x, llx, acc = _constrained_walk(m, start, log_lam, scale, rng)
                walk_acc += acc
                walk_steps += WALK_STEPS
                if acc:
                    new = (x, llx)
                    break
                scale = 0.5 * scale
        if new is None and max_evals is not None and max_evals - m.n_evals < WALK_STEPS:
            stopped_by = "budget"
            break
        if new is None:
            err = ConstrainedSamplingError(f"no point above the likelihood threshold at iteration {i}")
            err.trace = trace
            raise err
        live[j], live_ll[j] = new

    if trace_csv is not None:
        trace.to_csv(trace_csv)
    return run.report(
        "ns",
        log_Z,
        trace=trace,
        n_iter=len(trace),
        stopped_by=stopped_by,
        fallback_at=fallback_at,
        accept_rate=walk_acc / walk_steps if walk_steps else float("nan"),
        shrinkage=shrinkage,
        live_log_liks=live_ll.copy(),
    )


def log_ns_quadrature(log_lam_seq, log_a_seq) -> float:
    """Log-domain version of :func:`ns_quadrature` for tiny likelihoods."""
    l = np.asarray(log_lam_seq, dtype=float).reshape(-1)
    la = np.concatenate([[0.0], np.asarray(log_a_seq, dtype=float).reshape(-1)])
    if l.size + 1 != la.size or l.size == 0:
        raise InvalidArgumentError("sequences must be nonempty and of equal length")
    if np.any(np.diff(l) < 0) or np.any(np.diff(la) >= 0):
        raise InvalidArgumentError("levels must be nondecreasing and masses strictly decreasing")
    with np.errstate(divide="ignore"):
        log_dw = la[:-1] + np.log(-np.expm1(la[1:] - la[:-1]))
    return float(logsumexp(log_dw + l))
