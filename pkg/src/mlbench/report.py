"""Estimator output record."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .rng import SeedLike, seed_of
from .targets import TargetModel


@dataclass
class EstimateReport:
    """Result of one estimator run.

    Attributes
    ----------
    method : str
        Estimator id.
    log_Z_hat : float
        Log-evidence estimate.
    diagnostics : dict
        Method-specific extras such as ``ess``, ``accept_rate``, iteration
        traces or warning flags.
    n_evals : int
        Likelihood evaluations spent by this run.
    seed : int
        Seed of the run (-1 if a Generator was passed).
    runtime_ms : float
    """

    method: str
    log_Z_hat: float
    diagnostics: dict = field(default_factory=dict)
    n_evals: int = 0
    seed: int = -1
    runtime_ms: float = 0.0

    @property
    def Z_hat(self) -> float:
        return math.exp(self.log_Z_hat) if self.log_Z_hat < 709 else math.inf

    def csv_fields(self) -> dict:
        """Fields used by the benchmark CSV writer."""
        d = self.diagnostics
        return {
            "log_z_hat": _fmt(self.log_Z_hat),
            "n_evals": str(int(self.n_evals)),
            "ess": _fmt(d.get("ess", float("nan"))),
            "accept_rate": _fmt(d.get("accept_rate", float("nan"))),
            "runtime_ms": f"{self.runtime_ms:.3f}",
        }

    def to_json(self) -> str:
        scalars = {k: v for k, v in self.diagnostics.items() if isinstance(v, (int, float, str, bool))}
        return json.dumps(
            {
                "method": self.method,
                "log_Z_hat": self.log_Z_hat,
                "n_evals": self.n_evals,
                "seed": self.seed,
                "runtime_ms": self.runtime_ms,
                "diagnostics": scalars,
            },
            sort_keys=True,
        )


def _fmt(x) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


class Run:
    """Bookkeeping for one estimator call: counted model view, seed and timer.

    Use as ``run = Run(model, seed)`` and finish with ``run.report(...)``.
    """

    def __init__(self, model: TargetModel | None, seed: SeedLike = None):
        self.model = model.counting() if model is not None else None
        self.seed = seed_of(seed)
        self._t0 = time.perf_counter()

    def report(self, method: str, log_Z_hat: float, extra_evals: int = 0, **diagnostics) -> EstimateReport:
        n = (self.model.n_evals if self.model is not None else 0) + int(extra_evals)
        return EstimateReport(
            method=method,
            log_Z_hat=float(log_Z_hat),
            diagnostics=diagnostics,
            n_evals=n,
            seed=self.seed,
            runtime_ms=1e3 * (time.perf_counter() - self._t0),
        )


def log_sum_exp(values) -> float:
    """log(sum exp(v)) of a 1-D array; a lightweight stand-in for scipy's logsumexp in hot loops."""
    v = np.asarray(values, dtype=float).reshape(-1)
    m = float(v.max()) if v.size else -math.inf
    if not math.isfinite(m):
        return m if v.size else -math.inf
    return m + math.log(float(np.exp(v - m).sum()))


def log_mean_exp(values) -> float:
    """log((1/n) sum exp(v)) computed stably."""
    v = np.asarray(values, dtype=float).reshape(-1)
    return log_sum_exp(v) - math.log(v.size)
