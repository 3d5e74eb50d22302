"""Benchmark harness: registries, experiment specs, replicate runner and metrics.

Every estimator is wrapped by an adapter ``adapter(model, budget, seed,
**params)`` that splits a total budget of model evaluations according to
the method's protocol and returns an :class:`EstimateReport`.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import importance as imp
from . import nested, point, sequential, tempered
from .densities import Gaussian
from .errors import InvalidArgumentError, MLBenchError
from .kernels import Chain, IndependentProposal, PriorDensity, RandomWalkProposal, kmeans_cluster, run_mh
from .rng import make_rng
from .targets import TARGET_IDS, TargetModel, make_target, reference_log_Z

CSV_HEADER = (
    "target",
    "method",
    "params",
    "seed",
    "replicate",
    "status",
    "log_z_hat",
    "n_evals",
    "ess",
    "accept_rate",
    "runtime_ms",
)


# ---------------------------------------------------------------------------
# shared building blocks
# ---------------------------------------------------------------------------

def posterior_samples(model: TargetModel, n: int, seed, source: str = "auto", burn_in=None, rw_scale=None):
    """Posterior draws for sample-based methods.

    ``exact`` returns an array of direct draws (no evaluations spent);
    ``mh-prior`` runs MH with the prior as independent proposal and
    ``mh-rw`` a random walk, both returning a :class:`Chain` of ``n``
    evaluations. ``auto`` is ``exact`` when the target has a direct
    sampler and ``mh-prior`` otherwise.
    """
    if source == "auto":
        source = "exact" if model.tempered_sample is not None else "mh-prior"
    rng = make_rng(seed, 7)
    if source == "exact":
        return model.sample_tempered(1.0, rng, n)
    if source == "mh-prior":
        return run_mh(model, IndependentProposal.from_prior(model), n, burn_in, seed=rng)
    if source == "mh-rw":
        scale = 1.0 if rw_scale is None else rw_scale
        return run_mh(model, RandomWalkProposal.from_scale(scale, model.dim), n, burn_in, seed=rng)
    raise InvalidArgumentError(f"unknown posterior source {source!r}")


def _states(samples) -> np.ndarray:
    return samples.states if isinstance(samples, Chain) else np.asarray(samples)


def make_proposal(model: TargetModel, q="prior", h=None, q_mean=None, q_cov=None):
    """Proposal density from method parameters.

    ``h`` gives N(q_mean, h^2 I) (mean 0 by default); ``q="prior"`` the
    prior; ``q="normal"`` N(q_mean, q_cov).
    """
    D = model.dim
    mean = np.zeros(D) if q_mean is None else np.broadcast_to(np.asarray(q_mean, dtype=float), (D,))
    if h is not None:
        return Gaussian(mean, float(h) ** 2)
    if q == "prior":
        return PriorDensity(model)
    if q == "normal":
        return Gaussian(mean, 1.0 if q_cov is None else q_cov)
    raise InvalidArgumentError(f"unknown proposal {q!r}")


def _fit_normal(samples) -> Gaussian:
    S = _states(samples)
    cov = np.atleast_2d(np.cov(S, rowvar=False)) + 1e-12 * np.eye(S.shape[1])
    return Gaussian(S.mean(axis=0), cov)


def _split(budget: int, parts: int) -> int:
    n = int(budget) // int(parts)
    if n < 1:
        raise InvalidArgumentError(f"budget {budget} too small for {parts} parts")
    return n


# ---------------------------------------------------------------------------
# method adapters
# ---------------------------------------------------------------------------

def _naive(model, budget, seed):
    return imp.naive_mc(model, budget, seed)


def _is1(model, budget, seed, q="prior", h=None, q_mean=None, q_cov=None):
    return imp.is_v1(model, make_proposal(model, q, h, q_mean, q_cov), budget, seed)


def _is_fit(model, budget, seed, source="auto"):
    """Half the budget on posterior samples, a moment-matched normal, then IS with the rest."""
    n = _split(budget, 2)
    S = posterior_samples(model, n, seed, source, burn_in=0)
    rep = imp.is_v1(model, _fit_normal(S), budget - n, seed)
    rep.n_evals += S.n_evals if isinstance(S, Chain) else 0
    return rep


def _hm(model, budget, seed, source="auto"):
    return imp.harmonic_mean(model, posterior_samples(model, budget, seed, source), seed)


def _laplace(model, budget, seed, center="mean", source="auto"):
    return point.laplace(model, "chain", posterior_samples(model, budget - 1, seed, source), center=center, seed=seed)


def _ris(model, budget, seed, f="normal", h=None, source="auto"):
    S = posterior_samples(model, budget, seed, source)
    dens = _fit_normal(S) if h is None else Gaussian(np.zeros(model.dim), float(h) ** 2)
    return imp.ris(model, S, dens, seed)


def _ris_kde(model, budget, seed, C=4, h=0.0, source="auto"):
    S = posterior_samples(model, budget, seed, source)
    f = kmeans_cluster(_states(S), int(C), seed=make_rng(seed, 1), h=float(h))
    return imp.ris(model, S, f, seed)


def _clais(model, budget, seed, C=1, h=0.0, source="auto"):
    n = _split(budget, 2)
    S = posterior_samples(model, n, seed, source)
    return sequential.clais(model, S, int(C), float(h), budget - n, seed)


def _chib(model, budget, seed, fair=False, theta_star=None):
    n = _split(budget, 2)
    prop = IndependentProposal.from_prior(model)
    return point.chib(model, prop, theta_star, n, budget - n - 1, seed, fair=bool(fair))


def _kde(model, budget, seed, h=None, source="auto"):
    return point.kde_candidate(model, posterior_samples(model, budget - 1, seed, source), h=h, seed=seed)


def _interpolant(model, budget, seed, kernel="gaussian", h=1.0, source="auto"):
    n = min(int(budget), 2000)
    S = np.unique(_states(posterior_samples(model, n, seed, source)), axis=0)
    return point.interpolative_estimate(model, S, kernel, float(h), seed)


def _two_sample(fn, model, budget, seed, h=2.0, T=50, log_Z0=None, Z0=None, source="auto"):
    n1 = _split(budget, 2)
    S = posterior_samples(model, n1, seed, source)
    if Z0 is not None:
        log_Z0 = math.log(float(Z0))
    return fn(model, Gaussian(np.zeros(model.dim), float(h) ** 2), S, budget - n1, int(T), log_Z0, seed)


def _opt_bs(model, budget, seed, **kw):
    return _two_sample(imp.bridge_optimal_iterative, model, budget, seed, **kw)


def _mix_is(model, budget, seed, **kw):
    return _two_sample(imp.mix_is_iterative, model, budget, seed, **kw)


def _mix_self_is(model, budget, seed, **kw):
    return _two_sample(imp.mix_self_is_iterative, model, budget, seed, **kw)


def _umbrella(model, budget, seed, h=2.0):
    return imp.umbrella_two_stage(model, Gaussian(np.zeros(model.dim), float(h) ** 2), budget, seed)


def _is_p(model, budget, seed, beta=0.5, sampler="auto"):
    return tempered.is_p(model, float(beta), budget, sampler, seed)


def _ss(model, budget, seed, K=10, alpha=0.25, sampler="auto"):
    lad = tempered.make_ladder(int(K), float(alpha))
    return tempered.stepping_stone(model, lad, _split(budget, K), sampler, seed)


def _pp(model, budget, seed, K=10, alpha=0.25, order=1, sampler="auto"):
    lad = tempered.make_ladder(int(K), float(alpha))
    return tempered.power_posteriors(model, lad, _split(budget, int(K) + 1), order, sampler, seed)


def _ps(model, budget, seed, p_beta="uniform", a=None, sampler="auto", mh_steps=10):
    pb = ("beta", float(a)) if p_beta == "beta" else p_beta
    if tempered._resolve_sampler(model, sampler) == "exact":
        n = int(budget)
    else:
        n = _split(budget - 2, mh_steps)
    return tempered.path_sampling(model, n, pb, sampler, int(mh_steps), seed)


def _anis(model, budget, seed, K=10, alpha=0.25, steps=1, step_scale=None):
    lad = tempered.make_ladder(int(K), float(alpha))
    N = _split(budget, 1 + int(steps) * (int(K) - 1))
    return sequential.annealed_is(model, lad, N, int(steps), seed, step_scale=step_scale)


def _smc(model, budget, seed, K=10, alpha=0.25, steps=1, eps=0.5, estimator="Z1", forward="mcmc_kernel", step_scale=None):
    lad = tempered.make_ladder(int(K), float(alpha))
    if forward == "mcmc_kernel":
        N, backward = _split(budget, 1 + int(steps) * int(K)), "anis_choice"
    else:
        N, backward = _split(budget, 1 + int(K)), "symmetric"
    _, rep = sequential.smc(model, lad, N, forward, backward, float(eps), seed, int(steps), step_scale)
    if estimator == "Z2":
        rep.log_Z_hat = rep.diagnostics["log_Z2"]
    return rep


def _mtm(model, budget, seed, N_candidates=10, estimator="Z2"):
    T = _split(budget, N_candidates)
    _, rep = sequential.mtm_evidence(model, None, int(N_candidates), T, seed)
    if estimator == "Z1":
        rep.log_Z_hat = rep.diagnostics["log_Z1"]
    return rep


def _lais(model, budget, seed, n_chains=10, phi_mode="full", q_cov=1.0, beta=1.0):
    if phi_mode == "recycle":
        return sequential.lais(model, 1, int(budget), None, q_cov, "recycle", seed)
    T = _split(budget, 2 * int(n_chains))
    return sequential.lais(model, int(n_chains), T, float(beta), q_cov, phi_mode, seed)


def _ns(model, budget, seed, N_live=100, stop_tol=1e-6, shrinkage="exp", constrained_sampler="mcmc-fallback"):
    return nested.nested_sampling(
        model, int(N_live), constrained_sampler, float(stop_tol), seed=seed, shrinkage=shrinkage, max_evals=int(budget)
    )


def _lr(model, budget, seed, mode="IS", h=2.0, box=None, source="auto"):
    n = _split(budget, 2)
    S = posterior_samples(model, n, seed, source)
    prop = Gaussian(np.zeros(model.dim), float(h) ** 2)
    return imp.locally_restricted(model, prop, S, budget - n, box, mode, seed)


METHODS = {
    "naive": _naive,
    "is1": _is1,
    "is-fit": _is_fit,
    "hm": _hm,
    "laplace": _laplace,
    "ris": _ris,
    "ris-kde": _ris_kde,
    "clais": _clais,
    "chib": _chib,
    "kde": _kde,
    "interpolant": _interpolant,
    "opt-bs": _opt_bs,
    "mix-is": _mix_is,
    "mix-self-is": _mix_self_is,
    "umbrella2": _umbrella,
    "lr": _lr,
    "is-p": _is_p,
    "ss": _ss,
    "pp": _pp,
    "ps": _ps,
    "anis": _anis,
    "smc": _smc,
    "mtm": _mtm,
    "lais": _lais,
    "ns": _ns,
}


# ---------------------------------------------------------------------------
# experiment specs
# ---------------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    """One target, one method, R replicates with seeds seed + r."""

    target: str
    method: str
    target_params: dict = field(default_factory=dict)
    method_params: dict = field(default_factory=dict)
    replicates: int = 1
    budget: int = 10_000
    seed: int = 0
    out: str | None = None

    def validate(self) -> "ExperimentSpec":
        if self.target not in TARGET_IDS:
            raise InvalidArgumentError(f"unknown target {self.target!r}")
        if self.method not in METHODS:
            raise InvalidArgumentError(f"unknown method {self.method!r}")
        if int(self.replicates) < 1:
            raise InvalidArgumentError("replicates must be at least 1")
        if int(self.budget) <= 0:
            raise InvalidArgumentError("budget must be positive")
        if not isinstance(self.target_params, dict) or not isinstance(self.method_params, dict):
            raise InvalidArgumentError("target_params and method_params must be mappings")
        make_target(self.target, **self.target_params)
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise InvalidArgumentError(f"unknown config keys: {', '.join(sorted(extra))}")
        if "target" not in d or "method" not in d:
            raise InvalidArgumentError("config needs 'target' and 'method'")
        return cls(**d).validate()

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path) -> dict:
    """Read a JSON experiment config into a plain dict."""
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidArgumentError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise InvalidArgumentError("config must be a JSON object")
    return d


def parse_kv(items) -> dict:
    """Parse ``k=v`` strings, reading each value as JSON when possible."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise InvalidArgumentError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = json.loads(v)
        except json.JSONDecodeError:
            out[k.strip()] = v
    return out


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------

def _params_str(params: dict) -> str:
    return json.dumps(params, sort_keys=True, separators=(",", ":"))


def _run_one(spec: ExperimentSpec, r: int, timing: bool) -> dict:
    seed = int(spec.seed) + r
    row = {
        "target": spec.target,
        "method": spec.method,
        "params": _params_str(spec.method_params),
        "seed": str(seed),
        "replicate": str(r),
    }
    try:
        model = make_target(spec.target, **spec.target_params)
        rep = METHODS[spec.method](model, int(spec.budget), seed, **spec.method_params)
        fields = rep.csv_fields()
        if rep.n_evals > spec.budget:
            raise MLBenchError(f"spent {rep.n_evals} evaluations, budget {spec.budget}")
        row.update(status="ok", **fields)
    except (MLBenchError, ArithmeticError, ValueError, TypeError, np.linalg.LinAlgError) as exc:
        row.update(
            status=f"error:{type(exc).__name__}",
            log_z_hat="nan",
            n_evals="0",
            ess="nan",
            accept_rate="nan",
            runtime_ms="0.000",
        )
    if not timing:
        row["runtime_ms"] = "0.000"
    return {k: row[k] for k in CSV_HEADER}


def _run_chunk(args):
    spec, rs, timing = args
    return [_run_one(spec, r, timing) for r in rs]


def run_experiment(spec: ExperimentSpec, workers: int = 1, timing: bool = True) -> list[dict]:
    """Run all replicates of ``spec`` and return CSV rows ordered by replicate.

    Failed replicates produce a row with ``status`` starting with
    ``error:``; the run continues. With ``timing=False`` the runtime
    column is zeroed so that repeated runs give identical bytes.
    """
    spec.validate()
    R = int(spec.replicates)
    if workers > 1 and R > 1:
        chunks = [list(range(i, R, workers)) for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_chunk, [(spec, c, timing) for c in chunks]))
        rows = sorted((row for p in parts for row in p), key=lambda row: int(row["replicate"]))
    else:
        rows = [_run_one(spec, r, timing) for r in range(R)]
    if spec.out:
        write_csv(rows, spec.out)
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def write_csv(rows, path, append: bool = False) -> None:
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)
    text = rows_to_csv(rows)
    if append and os.path.exists(path):
        text = text.split("\n", 1)[1]
    with open(path, "a" if append else "w", newline="") as fh:
        fh.write(text)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def metrics(rows, exact_log_Z: float) -> dict:
    """Aggregate error metrics of Z-hat against the true Z.

    ``rows`` are CSV rows (only ``status == "ok"`` rows count) or plain
    log Z-hat values. Returns MSE, MAE, bias (all relative to Z, i.e. of
    Z-hat / Z - 1, plus absolute MSE and MAE), the relative median
    absolute error, the standard error of the relative MAE and the
    number of rows used and failed.
    """
    vals, failed = [], 0
    for r in rows:
        if isinstance(r, dict):
            if r.get("status") != "ok":
                failed += 1
                continue
            v = float(r["log_z_hat"])
        else:
            v = float(r)
        vals.append(v)
    lz = np.asarray(vals, dtype=float)
    n = lz.size
    if n == 0:
        return {"n": 0, "n_failed": failed}
    with np.errstate(over="ignore"):
        e = np.exp(lz - exact_log_Z) - 1.0
    ae = np.abs(e)
    Z = math.exp(exact_log_Z)
    return {
        "n": int(n),
        "n_failed": int(failed),
        "MSE": float(np.mean(e**2)) * Z * Z,
        "MAE": float(np.mean(ae)) * Z,
        "rel_MSE": float(np.mean(e**2)),
        "rel_MAE": float(np.mean(ae)),
        "rel_median_AE": float(np.median(ae)),
        "std_err": float(np.std(ae, ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
        "bias": float(np.mean(e)),
        "MAE_log": float(np.mean(np.abs(lz - exact_log_Z))),
    }


def format_metrics(m: dict) -> str:
    """Stable JSON text of a metrics dict (12 significant digits)."""
    return json.dumps({k: (float(f"{v:.12g}") if isinstance(v, float) else v) for k, v in m.items()}, sort_keys=True)


@lru_cache(maxsize=64)
def _cached_reference(target: str, params_json: str) -> float:
    return reference_log_Z(make_target(target, **json.loads(params_json)))


def exact_log_Z_for(target: str, target_params: dict | None = None) -> float:
    """Ground-truth log Z of a registered target (closed form or quadrature)."""
    return _cached_reference(target, json.dumps(target_params or {}, sort_keys=True))


# ---------------------------------------------------------------------------
# named experiments
# ---------------------------------------------------------------------------

def _specs(target, tparams, entries, R, budget, seed=0):
    return [ExperimentSpec(target, m, dict(tparams), dict(p), R, budget, seed) for m, p in entries]


def _bod_table():
    entries = [
        ("naive", {}),
        ("laplace", {}),
        ("hm", {}),
        ("ris", {}),
        ("ris-kde", {"C": 4, "h": 0.0}),
        ("clais", {"C": 1, "h": 0.0}),
        ("clais", {"C": 2, "h": 0.0}),
    ]
    return _specs("bod", {}, entries, 1000, 10_000)


def _bod_sensitivity():
    entries = [("chib", {"theta_star": [19.0, 1.0]}), ("chib", {"fair": True})]
    for C in (1, 2, 4, 10):
        for h in range(6):
            entries += [("ris-kde", {"C": C, "h": float(h)}), ("clais", {"C": C, "h": float(h)})]
    return _specs("bod", {}, entries, 100, 10_000)


def _std_normal_h():
    entries = []
    for h in (0.5, 0.75, 1.0, 1.5, 2.0, 3.0):
        entries += [("is1", {"h": h}), ("ris", {"h": h})]
    return _specs("stdnormal1d", {}, entries, 2000, 500)


def _std_normal_iterative():
    entries = []
    for T in (5, 15, 50):
        for m in ("opt-bs", "mix-is", "mix-self-is"):
            entries.append((m, {"h": 2.0, "T": T, "Z0": 5000.0}))
    entries.append(("umbrella2", {"h": 2.0}))
    return _specs("stdnormal1d", {}, entries, 500, 1000)


def _gauss_uniform(scenario: int):
    if scenario == 1:
        tp = {"delta": 10.0, "sigma": 3.0, "n_data": 10, "data_seed": 1}
    else:
        tp = {"delta": 1000.0, "sigma": 3.0, "n_data": 100, "data_seed": 2}
    entries = [
        ("naive", {}),
        ("hm", {}),
        ("is-p", {"beta": 0.5}),
        ("is-p", {"beta": 0.5**4}),
        ("ps", {}),
        ("ps", {"p_beta": "beta", "a": 0.25}),
    ]
    for alpha in (0.25, 1.0):
        for K in (2, 5, 10, 20, 35, 70):
            entries += [("ss", {"K": K, "alpha": alpha}), ("pp", {"K": K, "alpha": alpha})]
    return _specs("gauss-uniform", tp, entries, 200, 1000)


def _gauss_mix():
    out = []
    for L in (1, 6, 11, 16, 21, 26, 31, 36, 41, 46, 51):
        entries = [
            ("naive", {}),
            ("hm", {}),
            ("laplace", {}),
            ("ris-kde", {"C": 4, "h": 2.0}),
            ("clais", {"C": 4, "h": 10.0}),
        ]
        out += _specs("gauss-mix", {"D": 1, "L": float(L)}, entries, 200, 10_000)
    return out


def _sequential():
    tp = {"D": 1, "L": 1.0}
    entries = [
        ("anis", {"K": 10, "alpha": 0.25}),
        ("smc", {"K": 10, "alpha": 0.25, "eps": 0.5}),
        ("smc", {"K": 10, "alpha": 0.25, "eps": 0.5, "estimator": "Z2"}),
        ("mtm", {"N_candidates": 10}),
        ("lais", {"n_chains": 10, "phi_mode": "full", "q_cov": 5.0}),
        ("lais", {"n_chains": 10, "phi_mode": "temporal", "q_cov": 5.0}),
        ("lais", {"n_chains": 10, "phi_mode": "spatial", "q_cov": 5.0}),
        ("lais", {"n_chains": 10, "phi_mode": "standard", "q_cov": 5.0}),
    ]
    return _specs("gauss-mix", tp, entries, 100, 10_000)


def _nested():
    tp = {"delta": 10.0, "sigma": 3.0, "n_data": 10, "data_seed": 1}
    return _specs("gauss-uniform", tp, [("ns", {"N_live": 100})], 100, 100_000)


EXPERIMENTS = {
    "bod-table": _bod_table,
    "bod-sensitivity": _bod_sensitivity,
    "stdnormal-h": _std_normal_h,
    "stdnormal-iterative": _std_normal_iterative,
    "gauss-uniform-1": lambda: _gauss_uniform(1),
    "gauss-uniform-2": lambda: _gauss_uniform(2),
    "gauss-mix": _gauss_mix,
    "sequential": _sequential,
    "nested": _nested,
}


def experiment_specs(name: str, replicates: int | None = None) -> list[ExperimentSpec]:
    """Specs of a named experiment, optionally with a different replicate count."""
    if name not in EXPERIMENTS:
        raise InvalidArgumentError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)} or all")
    specs = EXPERIMENTS[name]()
    if replicates is not None:
        for s in specs:
            s.replicates = int(replicates)
    return specs


def run_named(name: str, out_dir, replicates: int | None = None, workers: int = 1, timing: bool = True) -> list[dict]:
    """Run a named experiment; writes ``<name>.csv`` and ``<name>_metrics.jsonl`` in ``out_dir``."""
    specs = experiment_specs(name, replicates)
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{name}.csv")
    all_rows, summary = [], []
    for i, spec in enumerate(specs):
        rows = run_experiment(spec, workers, timing)
        write_csv(rows, csv_path, append=i > 0)
        all_rows += rows
        m = metrics(rows, exact_log_Z_for(spec.target, spec.target_params))
        summary.append(
            {"target": spec.target, "target_params": spec.target_params, "method": spec.method,
             "params": spec.method_params, "metrics": json.loads(format_metrics(m))}
        )
    with open(os.path.join(out_dir, f"{name}_metrics.jsonl"), "w") as fh:
        for s in summary:
            fh.write(json.dumps(s, sort_keys=True) + "\n")
    return all_rows
