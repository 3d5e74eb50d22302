import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from mlbench.errors import ConstrainedSamplingError, InvalidArgumentError
from mlbench.nested import log_ns_quadrature, nested_sampling, ns_quadrature, survival_mass
from mlbench.targets import TargetModel, build_constant_likelihood, gauss_uniform_log_psi, gauss_uniform_survival


def _decaying_target() -> TargetModel:
    """Likelihood that drops after the first evaluation, so no replacement can ever be found."""
    calls = {"n": 0}

    def log_lik(x):
        calls["n"] += 1
        return np.full(x.shape[0], 0.0 if calls["n"] == 1 else -1.0)

    return TargetModel(
        dim=1,
        log_prior=lambda x: np.where(np.abs(x[:, 0]) <= 1, -math.log(2.0), -np.inf),
        log_lik=log_lik,
        prior_sample=lambda rng, n: rng.uniform(-1, 1, size=(n, 1)),
        support=(np.array([-1.0]), np.array([1.0])),
    )


class TestSurvivalMass:
    def test_zero_level_is_one(self, gauss_uniform):
        assert survival_mass(gauss_uniform, 0.0, 100, seed=0) == 1.0

    def test_constant_likelihood(self, constant):
        assert survival_mass(constant, 2.0, 100, seed=0) == 1.0
        assert survival_mass(constant, 3.0, 100, seed=0) == 0.0

    @pytest.mark.parametrize("frac", [0.1, 0.5, 0.9])
    def test_matches_analytic(self, gauss_uniform, frac):
        log_lam = gauss_uniform_log_psi(gauss_uniform, frac)
        est = survival_mass(gauss_uniform, log_lam, 20_000, seed=1, log=True)
        assert abs(est - frac) < 3 * math.sqrt(frac * (1 - frac) / 20_000)
        assert gauss_uniform_survival(gauss_uniform, log_lam) == pytest.approx(frac, abs=1e-10)

    def test_negative_level(self, gauss_uniform):
        with pytest.raises(InvalidArgumentError):
            survival_mass(gauss_uniform, -1.0)


class TestQuadrature:
    def test_example(self):
        assert ns_quadrature([1.0, 2.0], [0.5, 0.25]) == pytest.approx(1.0)

    def test_constant_levels(self):
        assert ns_quadrature([3.0] * 4, [0.5, 0.25, 0.125, 0.0]) == pytest.approx(3.0)

    @given(st.lists(st.floats(-30, 5), min_size=1, max_size=30), st.integers(2, 50))
    def test_log_domain_agrees(self, log_l, N):
        log_l = sorted(log_l)
        a = np.exp(-np.arange(1, len(log_l) + 1) / N)
        lin = ns_quadrature(np.exp(log_l), a)
        assert math.exp(log_ns_quadrature(log_l, np.log(a))) == pytest.approx(lin, rel=1e-10)

    @pytest.mark.parametrize(
        "lam,a", [([2.0, 1.0], [0.5, 0.25]), ([1.0, 2.0], [0.5, 0.5]), ([1.0], [1.0]), ([1.0, 2.0], [0.5])]
    )
    def test_invalid(self, lam, a):
        with pytest.raises(InvalidArgumentError):
            ns_quadrature(lam, a)

    def test_exact_levels_recover_evidence(self, gauss_uniform):
        # quadrature of the exact Psi on the geometric grid a_i = exp(-i / N)
        N = 2000
        a = np.exp(-np.arange(1, 40 * N + 1) / N)
        log_l = [gauss_uniform_log_psi(gauss_uniform, float(x)) for x in a]
        est = log_ns_quadrature(log_l, np.log(a))
        assert math.exp(est - gauss_uniform.exact_log_Z) == pytest.approx(1.0, abs=1e-3)


class TestNestedSampling:
    def test_constant_likelihood_closed_form(self):
        c = 2.5
        m = build_constant_likelihood(math.log(c))
        r = nested_sampling(m, N_live=10, max_iter=100, stop_tol=1e-12, seed=0)
        assert r.diagnostics["n_iter"] == 100
        assert math.exp(r.log_Z_hat) == pytest.approx(c * (1 - math.exp(-10.0)), rel=1e-12)
        assert math.exp(r.log_Z_hat) / c == pytest.approx(0.9999546, abs=1e-7)

    def test_mean_shrinkage(self):
        m = build_constant_likelihood(0.0)
        r = nested_sampling(m, N_live=10, max_iter=50, stop_tol=1e-12, shrinkage="mean", seed=0)
        assert math.exp(r.log_Z_hat) == pytest.approx(1 - (10 / 11) ** 50, rel=1e-12)

    def test_levels_nondecreasing_and_masses_decreasing(self, gauss_uniform):
        r = nested_sampling(gauss_uniform, N_live=50, seed=0)
        t = r.diagnostics["trace"]
        assert np.all(np.diff(t.log_lambda_min) >= 0)
        np.testing.assert_allclose(t.log_a_hat, -np.arange(1, len(t) + 1) / 50)
        assert r.diagnostics["stopped_by"] == "tol"

    def test_accuracy(self, gauss_uniform):
        ests = [nested_sampling(gauss_uniform, N_live=100, seed=s).log_Z_hat for s in range(10)]
        assert np.mean(ests) == pytest.approx(gauss_uniform.exact_log_Z, abs=0.1)

    def test_shrinkage_law(self, gauss_uniform):
        # realised masses t_i = Z(lambda_i) / Z(lambda_{i-1}) are Beta(N, 1)
        N = 20
        r = nested_sampling(gauss_uniform, N_live=N, seed=3)
        masses = np.array([gauss_uniform_survival(gauss_uniform, l) for l in r.diagnostics["trace"].log_lambda_min])
        masses = np.concatenate([[1.0], masses])
        ratios = masses[1:] / masses[:-1]
        assert stats.kstest(ratios, stats.beta(N, 1).cdf).pvalue > 0.01

    def test_trace_csv(self, gauss_uniform, tmp_path):
        path = tmp_path / "trace.csv"
        r = nested_sampling(gauss_uniform, N_live=20, seed=1, trace_csv=path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["i", "lambda_min", "a_hat", "increment"]
        assert len(rows) - 1 == r.diagnostics["n_iter"]
        total = sum(float(row[3]) for row in rows[1:])
        assert math.log(total) == pytest.approx(r.log_Z_hat, rel=1e-10)

    def test_budget_stop(self, gauss_uniform):
        r = nested_sampling(gauss_uniform, N_live=50, seed=0, max_evals=300)
        assert r.diagnostics["stopped_by"] == "budget"
        assert r.n_evals <= 300

    def test_fallback_switches_on(self):
        from mlbench.targets import make_target

        m = make_target("gauss-uniform", delta=1000.0, sigma=3.0, n_data=100, data_seed=1)
        r = nested_sampling(m, N_live=30, seed=0, max_iter=400)
        assert r.diagnostics["fallback_at"] is not None
        assert np.all(np.diff(r.diagnostics["trace"].log_lambda_min) >= 0)

    def test_unreachable_threshold_raises(self):
        with pytest.raises(ConstrainedSamplingError) as info:
            nested_sampling(_decaying_target(), N_live=5, seed=0)
        assert len(info.value.trace) == 1

    @pytest.mark.parametrize(
        "kw", [{"N_live": 1}, {"constrained_sampler": "slice"}, {"shrinkage": "median"}, {"stop_tol": 0.0}]
    )
    def test_invalid(self, gauss_uniform, kw):
        with pytest.raises(InvalidArgumentError):
            nested_sampling(gauss_uniform, **kw)
