"""Model comparison quantities built on evidence estimates.

Bayes factors, fractional Bayes factors from power-posterior constants,
the Occam factor Z / l_max and in-sample or leave-one-out estimates of
the expected log pointwise predictive density (ELPD).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidArgumentError, UnsupportedTargetError
from .kernels import Chain
from .report import EstimateReport
from .rng import SeedLike, make_rng
from .targets import TargetModel
from .tempered import ladder_from_betas, make_ladder, stepping_stone


def _log_z(x) -> float:
    v = x.log_Z_hat if isinstance(x, EstimateReport) else float(x)
    if not math.isfinite(v):
        raise InvalidArgumentError("log evidence must be finite")
    return v


def bayes_factor(report1, report2) -> float:
    """log BF = log Z1 - log Z2 from two reports (or two log-evidence values)."""
    return _log_z(report1) - _log_z(report2)


def _log_z_pair(model: TargetModel, beta: float, config, seed) -> tuple[float, float]:
    """(log Z(1), log Z(beta)) exactly or from one stepping-stone run."""
    if config == "exact":
        if model.exact_log_Z_beta is None:
            raise UnsupportedTargetError(f"target {model.name!r} has no closed-form Z(beta)")
        return float(model.exact_log_Z_beta(1.0)), float(model.exact_log_Z_beta(beta))
    cfg = {"K": 20, "alpha": 0.25, "N_per_rung": 1000, "sampler": "auto"}
    cfg.update(config or {})
    base = make_ladder(int(cfg["K"]), float(cfg["alpha"])).betas
    betas = np.unique(np.concatenate([base, [beta]]))
    rep = stepping_stone(model, ladder_from_betas(betas), int(cfg["N_per_rung"]), cfg["sampler"], seed)
    partial = rep.diagnostics["log_Z_partial"]
    k = int(np.flatnonzero(betas == beta)[0])
    return float(partial[-1]), float(partial[k])


def fractional_bayes_factor(
    model1: TargetModel,
    model2: TargetModel,
    beta: float,
    estimator_config="exact",
    seed: SeedLike = None,
) -> float:
    """log FBF = log BF(y) - log BF(y | beta) with BF(y | beta) = Z1(beta) / Z2(beta).

    Parameters
    ----------
    beta : float
        Training fraction in (0, 1).
    estimator_config : "exact" or dict
        ``"exact"`` uses the closed-form Z(beta) of both targets. A dict
        runs stepping-stone sampling with keys ``K``, ``alpha``,
        ``N_per_rung`` and ``sampler`` (beta is added to the ladder) and
        reads Z(beta) from its partial products.
    """
    if not 0.0 < beta < 1.0:
        raise InvalidArgumentError("beta must lie in (0, 1)")
    s1, s2 = make_rng(seed, 1), make_rng(seed, 2)
    z1, z1b = _log_z_pair(model1, beta, estimator_config, s1)
    z2, z2b = _log_z_pair(model2, beta, estimator_config, s2)
    return (z1 - z2) - (z1b - z2b)


def occam_factor(report, log_lik_max: float) -> float:
    """log W = log Z - log l_max; W <= 1 whenever Z respects its upper bound."""
    if not math.isfinite(log_lik_max):
        raise InvalidArgumentError("log_lik_max must be finite")
    return _log_z(report) - float(log_lik_max)


# ---------------------------------------------------------------------------
# predictive scores
# ---------------------------------------------------------------------------


@dataclass
class LooResult:
    """Harmonic-mean LOO estimate with per-datum weight diagnostics."""

    elpd: float
    ess: np.ndarray
    unstable: bool


def _per_datum(model: TargetModel, posterior_samples) -> np.ndarray:
    if not model.has_per_datum:
        raise UnsupportedTargetError(f"target {model.name!r} has no per-datum likelihood")
    S = posterior_samples.states if isinstance(posterior_samples, Chain) else model.as_points(posterior_samples)[0]
    return np.atleast_2d(model.per_datum_log_lik(S))


def elpd_in_sample(model: TargetModel, posterior_samples) -> float:
    """sum_i log[(1/N) sum_n l(y_i | theta_n)] over posterior samples theta_n."""
    L = _per_datum(model, posterior_samples)
    return float(np.sum(logsumexp(L, axis=0) - math.log(L.shape[0])))


def elpd_loo_hm(model: TargetModel, posterior_samples, ess_threshold: float = 0.1) -> LooResult:
    """Leave-one-out ELPD sum_i log[N / sum_n 1 / l(y_i | theta_n)].

    Each datum reweights the samples by w_n proportional to
    1 / l(y_i | theta_n). ``unstable`` is set when some datum's weights
    have an effective sample size below ``ess_threshold * N``.
    """
    L = _per_datum(model, posterior_samples)
    N = L.shape[0]
    per = math.log(N) - logsumexp(-L, axis=0)
    lw = -L - logsumexp(-L, axis=0)
    ess = 1.0 / np.exp(logsumexp(2.0 * lw, axis=0))
    return LooResult(float(np.sum(per)), ess, bool(np.any(ess < ess_threshold * N)))
