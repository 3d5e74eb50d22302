"""Marginal likelihood estimators and a benchmark harness."""

from .densities import Gaussian, GaussianMixture
from .errors import (
    ConstrainedSamplingError,
    DegenerateWeightsError,
    InitializationError,
    InvalidArgumentError,
    MLBenchError,
    ModelEvaluationError,
    UnsupportedTargetError,
)
from .importance import (
    bridge_optimal_iterative,
    harmonic_mean,
    ideal_mix_is,
    is_v1,
    is_v2,
    locally_restricted,
    mix_is_iterative,
    mix_self_is_iterative,
    naive_mc,
    ris,
    self_is,
    umbrella_two_stage,
)
from .kernels import Chain, ParticleCloud, ess, kmeans_cluster, resample, run_mh
from .nested import nested_sampling, ns_quadrature, survival_mass
from .point import chib, interpolative_estimate, kde_candidate, laplace
from .report import EstimateReport
from .rng import make_rng
from .selection import bayes_factor, elpd_in_sample, elpd_loo_hm, fractional_bayes_factor, occam_factor
from .sequential import annealed_is, clais, lais, mtm_evidence, smc
from .targets import TargetModel, grid_quadrature_logZ, make_target
from .tempered import is_p, make_ladder, path_sampling, power_posteriors, stepping_stone

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "ConstrainedSamplingError",
    "DegenerateWeightsError",
    "EstimateReport",
    "Gaussian",
    "GaussianMixture",
    "InitializationError",
    "InvalidArgumentError",
    "MLBenchError",
    "ModelEvaluationError",
    "ParticleCloud",
    "TargetModel",
    "UnsupportedTargetError",
    "annealed_is",
    "bayes_factor",
    "bridge_optimal_iterative",
    "chib",
    "clais",
    "elpd_in_sample",
    "elpd_loo_hm",
    "ess",
    "fractional_bayes_factor",
    "grid_quadrature_logZ",
    "harmonic_mean",
    "ideal_mix_is",
    "interpolative_estimate",
    "is_p",
    "is_v1",
    "is_v2",
    "kde_candidate",
    "kmeans_cluster",
    "lais",
    "laplace",
    "locally_restricted",
    "make_ladder",
    "make_rng",
    "make_target",
    "mix_is_iterative",
    "mix_self_is_iterative",
    "mtm_evidence",
    "naive_mc",
    "nested_sampling",
    "ns_quadrature",
    "occam_factor",
    "path_sampling",
    "power_posteriors",
    "resample",
    "ris",
    "run_mh",
    "self_is",
    "smc",
    "stepping_stone",
    "survival_mass",
    "umbrella_two_stage",
]
