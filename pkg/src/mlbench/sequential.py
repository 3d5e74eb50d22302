"""Sequential and adaptive estimators mixing MCMC moves with importance weights.

Annealed importance sampling, a generic SMC sampler with resampling and
its two evidence estimators, the evidence of an adaptive independent
multiple-try Metropolis chain, and layered adaptive IS (LAIS) with its
clustered variant (CLAIS).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from .densities import Gaussian, as_matrix, spd_cholesky
from .errors import DegenerateWeightsError, InvalidArgumentError
from .kernels import (
    Chain,
    ParticleCloud,
    RandomWalkProposal,
    ess,
    find_initial_point,
    kmeans_cluster,
    mh_step_batch,
    normalize_log_weights,
    resample_indices,
    run_mh,
)
from .report import EstimateReport, Run, log_mean_exp
from .rng import SeedLike, make_rng, seed_of
from .targets import TargetModel, tempered_log_density
from .tempered import TemperatureLadder

_LOG_2PI = math.log(2.0 * math.pi)


def _check_ladder(ladder: TemperatureLadder) -> np.ndarray:
    b = np.asarray(ladder.betas, dtype=float)
    if b.ndim != 1 or b.size < 2 or b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
        raise InvalidArgumentError("ladder must increase strictly from 0 to 1")
    return b


def _move_proposal(X: np.ndarray, step_scale) -> RandomWalkProposal:
    """Random-walk proposal with a fixed scale or 2.38 / sqrt(D) times the spread of X."""
    D = X.shape[1]
    if step_scale is not None:
        return RandomWalkProposal.from_scale(step_scale, D)
    sd = np.std(X, axis=0) if X.shape[0] > 1 else np.ones(D)
    return RandomWalkProposal.from_scale(2.38 / math.sqrt(D) * np.where(sd > 0, sd, 1e-3), D)


def _mh_moves(model, beta, X, lp, ll, steps, step_scale, rng):
    """``steps`` batched MH transitions invariant for g * l^beta."""
    prop = _move_proposal(X, step_scale)
    n_acc = 0
    for _ in range(steps):
        X, lp, ll, acc = mh_step_batch(model, beta, X, lp, ll, prop, rng)
        n_acc += int(acc.sum())
    return X, lp, ll, n_acc


def _weighted(db: float, ll: np.ndarray) -> np.ndarray:
    return db * ll


# ---------------------------------------------------------------------------
# annealed importance sampling
# ---------------------------------------------------------------------------


def annealed_is(
    model: TargetModel,
    ladder: TemperatureLadder,
    N: int,
    mcmc_steps_per_level: int = 1,
    seed: SeedLike = None,
    step_scale=None,
    final_move: bool = False,
) -> EstimateReport:
    """Annealed importance sampling from the prior to the posterior.

    Particles start from the prior. Before moving at level k each weight
    is multiplied by l(theta_{k-1})^(beta_k - beta_{k-1}); the move is
    ``mcmc_steps_per_level`` random-walk MH steps invariant for the power
    posterior at beta_k, for k = 1..K-1. The estimate is the mean weight.

    Parameters
    ----------
    step_scale : float or array_like, optional
        Fixed random-walk scale. By default 2.38 / sqrt(D) times the
        per-coordinate spread of the particles before each move.
    final_move : bool
        Also move at level K; the weights are not affected.
    """
    b = _check_ladder(ladder)
    if N < 1 or mcmc_steps_per_level < 0:
        raise InvalidArgumentError("need N >= 1 and mcmc_steps_per_level >= 0")
    run = Run(model, seed)
    m = run.model
    rng = make_rng(seed)
    X = m.prior_sample(rng, N)
    lp, ll = m.evaluate(X)
    log_rho = np.zeros(N)
    n_acc = n_prop = 0
    K = b.size - 1
    for k in range(1, K + 1):
        log_rho = log_rho + _weighted(b[k] - b[k - 1], ll)
        if k < K or final_move:
            X, lp, ll, a = _mh_moves(m, b[k], X, lp, ll, mcmc_steps_per_level, step_scale, rng)
            n_acc += a
            n_prop += N * mcmc_steps_per_level
    if not np.any(np.isfinite(log_rho)):
        raise DegenerateWeightsError("all annealed weights vanish", level=K)
    return run.report(
        "anis",
        log_mean_exp(log_rho),
        log_weights=log_rho,
        points=X,
        ess=ess(log_rho),
        accept_rate=n_acc / n_prop if n_prop else float("nan"),
    )


# ---------------------------------------------------------------------------
# sequential Monte Carlo
# ---------------------------------------------------------------------------


def smc(
    model: TargetModel,
    ladder: TemperatureLadder,
    N: int,
    forward: str = "mcmc_kernel",
    backward: str = "anis_choice",
    eps: float = 0.5,
    seed: SeedLike = None,
    mcmc_steps_per_level: int = 1,
    step_scale=None,
    scheme: str = "systematic",
) -> tuple[list[ParticleCloud], EstimateReport]:
    """SMC sampler along a temperature ladder with two evidence estimators.

    At each level the particles are weighted by the incremental factor
    gamma_k, the weights are normalized and the cloud is resampled when
    the effective sample size is at most ``eps * N``. A resampled cloud
    receives the mean weight on every particle, so that

    * Z1 = (1/N) sum_n w_K,n (mean of the final weights) and
    * Z2 = prod_k sum_n wbar_{k-1,n} gamma_k,n

    estimate the same Z and agree up to rounding on every run.

    Parameters
    ----------
    forward : {"mcmc_kernel", "random_walk"}
        ``mcmc_kernel`` moves with MH steps invariant for the level's
        power posterior (paired with ``backward="anis_choice"``, so that
        gamma_k = l(theta_{k-1})^(beta_k - beta_{k-1}) and the weights are
        those of annealed IS). ``random_walk`` perturbs each particle with
        a Gaussian step and no accept test; with the symmetric reversal
        as backward kernel gamma_k = pi_k(theta_k) / pi_{k-1}(theta_{k-1}).
    backward : {"anis_choice", "symmetric"}
    eps : float
        Resampling threshold in [0, 1]; 0 never resamples.

    Returns
    -------
    trace : list of ParticleCloud
        The cloud after each level (index 0 is the prior cloud).
    report : EstimateReport
        ``log_Z_hat`` is Z1; diagnostics hold ``log_Z1``, ``log_Z2``,
        ``ess_trace`` and ``resampled`` levels.
    """
    b = _check_ladder(ladder)
    if not 0.0 <= eps <= 1.0:
        raise InvalidArgumentError("eps must lie in [0, 1]")
    if N < 1:
        raise InvalidArgumentError("N must be positive")
    pairs = {("mcmc_kernel", "anis_choice"), ("random_walk", "symmetric")}
    if (forward, backward) not in pairs:
        raise InvalidArgumentError(f"unsupported forward/backward pair {(forward, backward)!r}")
    run = Run(model, seed)
    m = run.model
    rng = make_rng(seed)
    X = m.prior_sample(rng, N)
    lp, ll = m.evaluate(X)
    lw = np.zeros(N)
    log_Z2 = 0.0
    trace = [ParticleCloud(X, lw, 0)]
    ess_trace, resampled = [float(N)], []
    n_acc = n_prop = 0
    for k in range(1, b.size):
        db = b[k] - b[k - 1]
        log_wbar_prev = np.log(normalize_log_weights(lw))
        if forward == "mcmc_kernel":
            log_gamma = _weighted(db, ll)
            lw = lw + log_gamma
        else:
            prev = tempered_log_density(lp, ll, b[k - 1])
            X = _move_proposal(X, step_scale).step(rng, X)
            lp, ll = m.evaluate(X)
            with np.errstate(invalid="ignore"):
                log_gamma = np.nan_to_num(tempered_log_density(lp, ll, b[k]) - prev, nan=-np.inf)
            lw = lw + log_gamma
        if not np.any(np.isfinite(lw)) or np.any(np.isnan(lw)):
            raise DegenerateWeightsError(f"all weights vanish at level {k}", level=k)
        log_Z2 += float(logsumexp(log_wbar_prev + log_gamma))
        e = ess(lw)
        ess_trace.append(e)
        if e <= eps * N:
            idx = resample_indices(lw, N, scheme, rng)
            X, lp, ll = X[idx], lp[idx], ll[idx]
            lw = np.full(N, log_mean_exp(lw))
            resampled.append(k)
        if forward == "mcmc_kernel":
            X, lp, ll, a = _mh_moves(m, b[k], X, lp, ll, mcmc_steps_per_level, step_scale, rng)
            n_acc += a
            n_prop += N * mcmc_steps_per_level
        trace.append(ParticleCloud(X, lw, k))
    log_Z1 = log_mean_exp(lw)
    report = run.report(
        "smc",
        log_Z1,
        log_Z1=log_Z1,
        log_Z2=log_Z2,
        log_weights=lw,
        ess=ess_trace[-1],
        ess_trace=np.array(ess_trace),
        resampled=resampled,
        accept_rate=n_acc / n_prop if n_prop else float("nan"),
    )
    return trace, report


# ---------------------------------------------------------------------------
# adaptive independent multiple-try Metropolis
# ---------------------------------------------------------------------------


class _WeightedMoments:
    """Running weighted mean and covariance with log-domain weights."""

    def __init__(self, dim: int):
        self.shift = -np.inf
        self.s0 = 0.0
        self.s1 = np.zeros(dim)
        self.s2 = np.zeros((dim, dim))

    def add(self, Z: np.ndarray, lw: np.ndarray) -> None:
        finite = np.isfinite(lw)
        if not finite.any():
            return
        Z, lw = Z[finite], lw[finite]
        new_shift = max(self.shift, float(lw.max()))
        if self.shift > -np.inf:
            c = math.exp(self.shift - new_shift)
            self.s0 *= c
            self.s1 *= c
            self.s2 *= c
        self.shift = new_shift
        w = np.exp(lw - new_shift)
        self.s0 += float(w.sum())
        self.s1 += w @ Z
        self.s2 += (Z * w[:, None]).T @ Z

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        mu = self.s1 / self.s0
        cov = self.s2 / self.s0 - np.outer(mu, mu)
        return mu, 0.5 * (cov + cov.T)


def _prior_moments(model: TargetModel, rng: np.random.Generator, n: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    P = model.prior_sample(rng, n)
    return P.mean(axis=0), np.atleast_2d(np.cov(P, rowvar=False))


def mtm_evidence(
    model: TargetModel,
    q: Gaussian | None = None,
    N_candidates: int = 10,
    T: int = 1000,
    seed: SeedLike = None,
    adapt: bool = True,
    burn_in: int = 0,
) -> tuple[Chain, EstimateReport]:
    """Adaptive independent multiple-try Metropolis (type 2) and its evidence estimates.

    At each step N candidates are drawn from q_t = N(mu_t, C_t) with
    weights w = pi / q_t and Z' = mean w. One candidate is picked with
    probability proportional to w and accepted with probability
    min(1, Z' / Z_{t-1}); on acceptance Z_t = Z'. The proposal is adapted
    to the weighted mean and covariance (plus 1e-6 I) of all candidates
    drawn so far and frozen after T / 2 steps.

    Parameters
    ----------
    q : Gaussian, optional
        Initial proposal. Defaults to the moments of 1000 prior draws.
    adapt : bool
        Keep q fixed when False.
    burn_in : int
        Leading chain states dropped from the returned chain.

    Returns
    -------
    chain : Chain
    report : EstimateReport
        ``log_Z_hat`` is Z2 = mean_t Z'_t (every step's IS estimate);
        ``log_Z1`` is the mean of the chain's Z_t.
    """
    if N_candidates < 1 or T < 1:
        raise InvalidArgumentError("need N_candidates >= 1 and T >= 1")
    if not 0 <= burn_in < T:
        raise InvalidArgumentError("need 0 <= burn_in < T")
    run = Run(model, seed)
    m = run.model
    rng = make_rng(seed)
    D = m.dim
    if q is None:
        mu, C = _prior_moments(m, make_rng(seed, 1))
    else:
        mu, C = q.mean.copy(), q.cov.copy()
    g = Gaussian(mu, C)
    moments = _WeightedMoments(D)
    freeze = T // 2

    states = np.empty((T, D))
    lps, lls = np.empty(T), np.empty(T)
    log_R = np.empty(T)
    log_Zt = np.empty(T)
    accepted = np.zeros(T, dtype=bool)
    x = np.full(D, np.nan)
    x_lp = x_ll = np.nan
    log_z_cur = -np.inf
    for t in range(T):
        Zc = g.sample(rng, N_candidates)
        lp, ll = m.evaluate(Zc)
        with np.errstate(invalid="ignore"):
            lw = np.nan_to_num(lp + ll - g.logpdf(Zc), nan=-np.inf)
        if not np.any(np.isfinite(lw)):
            raise DegenerateWeightsError(f"all candidate weights vanish at step {t}", level=t)
        log_zp = log_mean_exp(lw)
        log_R[t] = log_zp
        j = int(resample_indices(lw, 1, "multinomial", rng)[0])
        log_u = math.log(rng.uniform())
        if log_u < log_zp - log_z_cur:
            x, x_lp, x_ll, log_z_cur = Zc[j], lp[j], ll[j], log_zp
            accepted[t] = True
        states[t], lps[t], lls[t], log_Zt[t] = x, x_lp, x_ll, log_z_cur
        if adapt and t < freeze:
            moments.add(Zc, lw)
            mu_new, C_new = moments.moments()
            try:
                spd_cholesky(C_new + 1e-6 * np.eye(D))
                g = Gaussian(mu_new, C_new + 1e-6 * np.eye(D))
            except InvalidArgumentError:
                pass
    log_Z1 = log_mean_exp(log_Zt)
    log_Z2 = log_mean_exp(log_R)
    keep = slice(burn_in, T)
    n_moves = max(T - 1, 1)
    chain = Chain(
        states=states[keep],
        log_target_values=lps[keep] + lls[keep],
        log_lik_values=lls[keep],
        log_prior_values=lps[keep],
        acceptance_rate=float(accepted[1:].sum()) / n_moves if T > 1 else 1.0,
        seed=seed_of(seed),
        n_evals=m.n_evals,
        n_accepted=int(accepted.sum()),
        n_proposed=T,
    )
    report = run.report(
        "mtm",
        log_Z2,
        log_Z1=log_Z1,
        log_Z2=log_Z2,
        log_R=log_R,
        accepted=accepted,
        accept_rate=chain.acceptance_rate,
        proposal_mean=g.mean,
        proposal_cov=g.cov,
    )
    return chain, report


# ---------------------------------------------------------------------------
# layered adaptive importance sampling
# ---------------------------------------------------------------------------


def _pairwise_log_gauss(X: np.ndarray, M: np.ndarray, chol: np.ndarray, log_norm: float) -> np.ndarray:
    """Matrix of log N(x_i | m_j, C) for the rows of X and M."""
    D = X.shape[1]
    Linv = np.linalg.inv(chol)
    Xw, Mw = X @ Linv.T, M @ Linv.T
    out = np.empty((X.shape[0], M.shape[0]))
    step = max(1, 4_000_000 // max(M.shape[0] * D, 1))
    m2 = np.einsum("ij,ij->i", Mw, Mw)
    for s in range(0, X.shape[0], step):
        xs = Xw[s : s + step]
        d2 = np.einsum("ij,ij->i", xs, xs)[:, None] + m2[None, :] - 2.0 * xs @ Mw.T
        out[s : s + step] = log_norm - 0.5 * np.maximum(d2, 0.0)
    return out


def _mixture_log_density(X: np.ndarray, M: np.ndarray, chol: np.ndarray, log_norm: float) -> np.ndarray:
    """log of (1/|M|) sum_j N(x_i | m_j, C), chunked over the rows of X."""
    D = X.shape[1]
    out = np.empty(X.shape[0])
    step = max(1, 4_000_000 // max(M.shape[0] * D, 1))
    for s in range(0, X.shape[0], step):
        L = _pairwise_log_gauss(X[s : s + step], M, chol, log_norm)
        out[s : s + step] = logsumexp(L, axis=1) - math.log(M.shape[0])
    return out


def _phi(mode: str, theta: np.ndarray, mu: np.ndarray, chol: np.ndarray, log_norm: float) -> np.ndarray:
    """log Phi at the lower-layer samples; theta and mu have shape (N, T, D)."""
    N, T, D = mu.shape
    if mode == "full":
        return _mixture_log_density(theta.reshape(-1, D), mu.reshape(-1, D), chol, log_norm).reshape(N, T)
    out = np.empty((N, T))
    if mode == "temporal":
        for n in range(N):
            out[n] = _mixture_log_density(theta[n], mu[n], chol, log_norm)
    elif mode == "spatial":
        for t in range(T):
            out[:, t] = _mixture_log_density(theta[:, t], mu[:, t], chol, log_norm)
    elif mode == "standard":
        z = np.linalg.solve(chol, (theta - mu).reshape(-1, D).T)
        out = (log_norm - 0.5 * np.einsum("ij,ij->j", z, z)).reshape(N, T)
    else:
        raise InvalidArgumentError(f"unknown phi_mode {mode!r}")
    return out


def lais(
    model: TargetModel,
    n_chains: int = 1,
    chain_len: int = 1000,
    upper_betas=None,
    q_cov=1.0,
    phi_mode: str = "full",
    seed: SeedLike = None,
    upper_cov=None,
) -> EstimateReport:
    """Layered adaptive importance sampling.

    The upper layer runs ``n_chains`` random-walk MH chains of length
    ``chain_len`` targeting the power posteriors at ``upper_betas``
    (default 1). Their states mu_{n,t} are the means of the lower-layer
    proposals: theta_{n,t} ~ N(mu_{n,t}, C) is weighted by
    pi(theta_{n,t}) / Phi(theta_{n,t}) and Z is the mean weight. Phi is

    * ``full``: the mixture of all N T proposals,
    * ``temporal``: the mixture of the T proposals of the same chain,
    * ``spatial``: the mixture of the N proposals at the same step,
    * ``standard``: the proposal that generated the sample,
    * ``recycle``: one chain whose own random-walk proposals (with
      covariance C) are reused as the samples, weighted by the temporal
      mixture of those proposals; costs ``chain_len`` evaluations.

    Parameters
    ----------
    upper_cov : optional
        Covariance of the upper chains' random walk (default ``q_cov``).
    """
    N, T = int(n_chains), int(chain_len)
    if N < 1 or T < 1:
        raise InvalidArgumentError("need n_chains >= 1 and chain_len >= 1")
    D = model.dim
    C = as_matrix(q_cov, D)
    chol = spd_cholesky(C)
    log_norm = -0.5 * D * _LOG_2PI - float(np.log(np.diag(chol)).sum())
    if phi_mode == "recycle":
        return _lais_recycle(model, T, C, chol, log_norm, seed)
    betas = np.ones(N) if upper_betas is None else np.broadcast_to(np.asarray(upper_betas, dtype=float), (N,))
    if np.any(betas < 0):
        raise InvalidArgumentError("upper_betas must be nonnegative")
    run = Run(model, seed)
    m = run.model
    up = RandomWalkProposal(C if upper_cov is None else upper_cov, D)
    mu = np.empty((N, T, D))
    accs = []
    for n in range(N):
        ch = run_mh(m.tempered(float(betas[n])), up, T, burn_in=0, seed=make_rng(seed, 1, n))
        mu[n] = ch.states
        accs.append(ch.acceptance_rate)
    rng = make_rng(seed)
    theta = (mu.reshape(-1, D) + rng.standard_normal((N * T, D)) @ chol.T).reshape(N, T, D)
    lp, ll = m.evaluate(theta.reshape(-1, D))
    lphi = _phi(phi_mode, theta, mu, chol, log_norm).reshape(-1)
    if np.any(lphi == -np.inf):
        raise DegenerateWeightsError("mixture density vanishes at one of its own samples")
    lw = lp + ll - lphi
    if not np.any(np.isfinite(lw)):
        raise DegenerateWeightsError("all LAIS weights vanish")
    return run.report(
        "lais",
        log_mean_exp(lw),
        phi_mode=phi_mode,
        ess=ess(lw),
        accept_rate=float(np.mean(accs)),
        upper_means=mu,
    )


def _lais_recycle(model, T, C, chol, log_norm, seed) -> EstimateReport:
    if T < 2:
        raise InvalidArgumentError("recycling needs chain_len >= 2")
    run = Run(model, seed)
    m = run.model
    rng = make_rng(seed)
    D = m.dim
    x, lp_x, ll_x = find_initial_point(m, 1.0, rng)
    n = T - 1
    eps = rng.standard_normal((n, D)) @ chol.T
    log_u = np.log(rng.uniform(size=n))
    centers = np.empty((n, D))
    Z = np.empty((n, D))
    lpi = np.empty(n)
    lt = lp_x + ll_x
    acc = 0
    for t in range(n):
        centers[t] = x
        z = x + eps[t]
        lpz, llz = m.evaluate(z[None, :])
        Z[t], lpi[t] = z, float(lpz[0] + llz[0])
        if log_u[t] < lpi[t] - lt:
            x, lt = z, lpi[t]
            acc += 1
    lphi = _mixture_log_density(Z, centers, chol, log_norm)
    lw = lpi - lphi
    if not np.any(np.isfinite(lw)):
        raise DegenerateWeightsError("all recycled weights vanish")
    return run.report("lais", log_mean_exp(lw), phi_mode="recycle", ess=ess(lw), accept_rate=acc / n)


def clais(
    model: TargetModel,
    samples,
    C_clusters: int = 1,
    h: float = 0.0,
    N_lower: int = 1000,
    seed: SeedLike = None,
) -> EstimateReport:
    """Importance sampling with a clustered Gaussian mixture built from samples.

    ``samples`` (a :class:`Chain`, whose evaluations are added to the
    count, or an array) are split by k-means into ``C_clusters`` groups;
    the proposal is Phi = sum_k a_k N(centroid_k, Sigma_k + h I) with
    a_k the cluster proportions. ``N_lower`` draws from Phi give
    Z = mean pi / Phi.
    """
    run = Run(model, seed)
    m = run.model
    extra = samples.n_evals if isinstance(samples, Chain) else 0
    S = samples.states if isinstance(samples, Chain) else m.as_points(samples)[0]
    if S.shape[0] < C_clusters:
        raise InvalidArgumentError("need at least C_clusters samples")
    if N_lower < 1:
        raise InvalidArgumentError("N_lower must be positive")
    phi = kmeans_cluster(S, C_clusters, seed=make_rng(seed, 1), h=h)
    rng = make_rng(seed)
    X = phi.sample(rng, N_lower)
    lp, ll = m.evaluate(X)
    lw = lp + ll - phi.logpdf(X)
    if not np.any(np.isfinite(lw)):
        raise DegenerateWeightsError("all CLAIS weights vanish")
    diag = {"ess": ess(lw), "n_clusters": len(phi.components), "h": h}
    if isinstance(samples, Chain):
        diag["accept_rate"] = samples.acceptance_rate
    return run.report("clais", log_mean_exp(lw), extra_evals=extra, **diag)
