import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlbench.densities import Gaussian
from mlbench.errors import DegenerateWeightsError, InvalidArgumentError
from mlbench.importance import (
    RatioProblem,
    bridge_generic,
    bridge_optimal_iterative,
    harmonic_mean,
    ideal_mix_is,
    is_v1,
    is_v2,
    locally_restricted,
    log_abs_diff,
    mix_is_iterative,
    mix_self_is_iterative,
    naive_mc,
    pre_umbrella_ratio,
    ris,
    self_is,
    umbrella_ratio,
    umbrella_two_stage,
)
from mlbench.kernels import PriorDensity
from mlbench.rng import make_rng
from conftest import within_std_errs


def _posterior_draws(model, n, seed):
    return model.params["posterior"].sample(make_rng(seed), n)


@pytest.fixture
def wide(gauss_mix):
    post = gauss_mix.params["posterior"]
    mean = float(post.weights @ post.means[:, 0])
    return Gaussian([mean], [[2.0 * 20.0]])


class TestSimpleEstimators:
    def test_naive_unbiased(self, gauss_mix):
        Z = [math.exp(naive_mc(gauss_mix, 200, seed=s).log_Z_hat) for s in range(300)]
        ok, mean, se = within_std_errs(Z, math.exp(gauss_mix.exact_log_Z))
        assert ok, (mean, se)

    def test_is_v1_unbiased(self, gauss_mix, wide):
        Z = [math.exp(is_v1(gauss_mix, wide, 100, seed=s).log_Z_hat) for s in range(300)]
        ok, mean, se = within_std_errs(Z, math.exp(gauss_mix.exact_log_Z))
        assert ok, (mean, se)

    def test_is_v1_posterior_proposal_is_exact(self, gauss_mix):
        post = gauss_mix.params["posterior"]
        for s in range(5):
            r = is_v1(gauss_mix, post, 7, seed=s)
            assert r.log_Z_hat == pytest.approx(gauss_mix.exact_log_Z, abs=1e-12)
            assert r.diagnostics["ess"] == pytest.approx(7.0)

    def test_n_evals(self, gauss_mix, wide):
        assert naive_mc(gauss_mix, 123, seed=0).n_evals == 123
        assert is_v1(gauss_mix, wide, 45, seed=0).n_evals == 45

    def test_naive_requires_samples(self, gauss_mix):
        with pytest.raises(InvalidArgumentError):
            naive_mc(gauss_mix, 0)

    def test_harmonic_mean_constant(self, constant):
        r = harmonic_mean(constant, np.linspace(-0.9, 0.9, 11)[:, None])
        assert r.log_Z_hat == pytest.approx(math.log(2.5))

    @given(st.integers(0, 10_000), st.floats(0.5, 30.0))
    @settings(max_examples=30, deadline=None)
    def test_is_v2_between_extreme_likelihoods(self, seed, scale):
        from mlbench.targets import make_target

        m = make_target("gauss-mix", D=1, L=1.0)
        q = Gaussian([1.0], [[scale]])
        X = q.sample(make_rng(seed), 50)
        ll = m.log_lik(X)
        r = is_v2(m, q.logpdf, X)
        assert ll.min() - 1e-12 <= r.log_Z_hat <= ll.max() + 1e-12

    def test_is_v2_all_zero_weights(self, gauss_uniform):
        with pytest.raises(DegenerateWeightsError):
            is_v2(gauss_uniform, lambda x: np.zeros(len(x)), np.array([[20.0], [30.0]]))


class TestReductions:
    """Algebraic identities between estimators, equal up to rounding."""

    def test_ris_with_prior_is_harmonic_mean(self, gauss_mix):
        S = _posterior_draws(gauss_mix, 500, 0)
        a = ris(gauss_mix, S, PriorDensity(gauss_mix)).log_Z_hat
        b = harmonic_mean(gauss_mix, S).log_Z_hat
        assert a == pytest.approx(b, rel=1e-12)

    def test_self_is_with_posterior_is_ris(self, gauss_mix, wide):
        S = _posterior_draws(gauss_mix, 500, 1)
        a = self_is(gauss_mix, gauss_mix.log_post, S, wide).log_Z_hat
        b = ris(gauss_mix, S, wide).log_Z_hat
        assert a == pytest.approx(b, rel=1e-12)

    def test_umbrella_with_q3_is_self_is(self, gauss_mix, wide):
        q = Gaussian([0.0], [[30.0]])
        X = q.sample(make_rng(2), 400)
        prob = RatioProblem(gauss_mix.log_post, wide.logpdf)
        a = umbrella_ratio(prob, q.logpdf, X)
        b = self_is(gauss_mix, q.logpdf, X, wide).log_Z_hat
        assert a == pytest.approx(b, rel=1e-12)

    def test_is_v2_with_posterior_is_harmonic_mean(self, gauss_mix):
        S = _posterior_draws(gauss_mix, 300, 3)
        a = is_v2(gauss_mix, gauss_mix.log_post, S).log_Z_hat
        b = harmonic_mean(gauss_mix, S).log_Z_hat
        assert a == pytest.approx(b, rel=1e-12)

    def test_is_v2_with_prior_is_naive(self, gauss_mix):
        a = naive_mc(gauss_mix, 300, seed=4)
        X = gauss_mix.prior_sample(make_rng(4), 300)
        b = is_v2(gauss_mix, PriorDensity(gauss_mix).logpdf, X)
        assert a.log_Z_hat == pytest.approx(b.log_Z_hat, rel=1e-12)

    def test_locally_restricted_whole_space_is(self, gauss_mix, wide):
        S = _posterior_draws(gauss_mix, 100, 5)
        a = locally_restricted(gauss_mix, wide, S, 400, box=None, mode="IS", seed=6).log_Z_hat
        b = is_v1(gauss_mix, wide, 400, seed=6).log_Z_hat
        assert a == pytest.approx(b, rel=1e-12)

    def test_locally_restricted_whole_space_ris(self, gauss_mix, wide):
        S = _posterior_draws(gauss_mix, 400, 7)
        a = locally_restricted(gauss_mix, wide, S, 50, box=([-1e9], [1e9]), mode="RIS", seed=8).log_Z_hat
        b = ris(gauss_mix, S, wide).log_Z_hat
        assert a == pytest.approx(b, rel=1e-12)

    def test_bridge_without_posterior_samples_is_is_v1(self, gauss_mix, wide):
        a = bridge_optimal_iterative(gauss_mix, wide, None, 300, log_Z0=0.0, seed=9).log_Z_hat
        b = is_v1(gauss_mix, wide, 300, seed=9).log_Z_hat
        assert a == b

    def test_bridge_without_proposal_samples_is_ris(self, gauss_mix, wide):
        S = _posterior_draws(gauss_mix, 300, 10)
        a = bridge_optimal_iterative(gauss_mix, wide, S, 0, log_Z0=0.0).log_Z_hat
        b = ris(gauss_mix, S, wide).log_Z_hat
        assert a == pytest.approx(b, rel=1e-12)


class TestRatios:
    """c1 = 2, c2 = 1 for two differently shaped Gaussians."""

    @pytest.fixture
    def problem(self):
        g1, g2 = Gaussian([0.0], [[1.0]]), Gaussian([0.5], [[2.25]])
        return RatioProblem(lambda x: math.log(2.0) + g1.logpdf(x), g2.logpdf, g1.sample, g2.sample), g1, g2

    def test_pre_umbrella(self, problem):
        prob, _, g2 = problem
        r = pre_umbrella_ratio(prob, g2.sample(make_rng(0), 20_000))
        assert math.exp(r) == pytest.approx(2.0, abs=0.05)

    def test_umbrella(self, problem):
        prob, _, _ = problem
        g3 = Gaussian([0.2], [[4.0]])
        r = umbrella_ratio(prob, g3.logpdf, g3.sample(make_rng(1), 20_000))
        assert math.exp(r) == pytest.approx(2.0, abs=0.05)

    def test_geometric_bridge(self, problem):
        prob, g1, g2 = problem

        def log_alpha(x):
            return -0.5 * (prob.log_q1(x) + prob.log_q2(x))

        r = bridge_generic(prob, log_alpha, g1.sample(make_rng(2), 10_000), g2.sample(make_rng(3), 10_000))
        assert math.exp(r) == pytest.approx(2.0, abs=0.05)

    def test_bridge_with_alpha_one_over_q2_is_pre_umbrella(self, problem):
        prob, _, g2 = problem
        X2 = g2.sample(make_rng(4), 1000)
        a = bridge_generic(prob, lambda x: -prob.log_q2(x), None, X2)
        assert a == pytest.approx(pre_umbrella_ratio(prob, X2), rel=1e-12)

    @given(st.floats(-50, 50), st.floats(-50, 50))
    def test_log_abs_diff(self, a, b):
        got = log_abs_diff(np.array([a]), np.array([b]))[0]
        if a == b:
            assert got == -np.inf
        else:
            ref = max(a, b) + math.log(-math.expm1(-abs(a - b)))
            assert got == pytest.approx(ref, rel=1e-12, abs=1e-12)


class TestUmbrellaTwoStage:
    def test_accuracy_and_budget(self, gauss_mix, wide):
        reps = [umbrella_two_stage(gauss_mix, wide, 2000, seed=s) for s in range(20)]
        assert all(r.n_evals == 2000 for r in reps)
        assert np.mean([r.log_Z_hat for r in reps]) == pytest.approx(gauss_mix.exact_log_Z, abs=0.05)

    def test_too_small(self, gauss_mix, wide):
        with pytest.raises(InvalidArgumentError):
            umbrella_two_stage(gauss_mix, wide, 4)


class TestIterative:
    @pytest.mark.parametrize("fn", [bridge_optimal_iterative, mix_is_iterative, mix_self_is_iterative])
    def test_converges_to_truth(self, gauss_mix, wide, fn):
        ests = []
        for s in range(10):
            S = _posterior_draws(gauss_mix, 1000, 100 + s)
            r = fn(gauss_mix, wide, S, 1000, T_iter=100, log_Z0=0.0, seed=s)
            assert r.diagnostics["iterations"] < 100
            ests.append(r.log_Z_hat)
        assert np.mean(ests) == pytest.approx(gauss_mix.exact_log_Z, abs=0.03)

    @pytest.mark.parametrize("fn", [bridge_optimal_iterative, mix_is_iterative, mix_self_is_iterative])
    def test_fixed_point_independent_of_start(self, gauss_mix, wide, fn):
        S = _posterior_draws(gauss_mix, 500, 1)
        a = fn(gauss_mix, wide, S, 500, T_iter=500, log_Z0=-20.0, seed=0, tol=1e-12).log_Z_hat
        b = fn(gauss_mix, wide, S, 500, T_iter=500, log_Z0=10.0, seed=0, tol=1e-12).log_Z_hat
        assert a == pytest.approx(b, abs=1e-9)

    def test_trace_starts_at_z0(self, gauss_mix, wide):
        S = _posterior_draws(gauss_mix, 100, 1)
        r = mix_is_iterative(gauss_mix, wide, S, 100, T_iter=3, log_Z0=1.5, seed=0)
        assert r.diagnostics["trace"][0] == 1.5
        assert r.diagnostics["iterations"] == 3

    def test_ideal_mix_is_equals_one_step_from_truth(self, gauss_mix, wide):
        S = _posterior_draws(gauss_mix, 400, 2)
        a = ideal_mix_is(gauss_mix, wide, S, 600, seed=3).log_Z_hat
        b = mix_is_iterative(gauss_mix, wide, S, 600, T_iter=1, log_Z0=gauss_mix.exact_log_Z, seed=3).log_Z_hat
        assert a == pytest.approx(b, rel=1e-12)

    def test_ideal_mix_is_unbiased(self, gauss_mix, wide):
        Z = []
        for s in range(200):
            S = _posterior_draws(gauss_mix, 50, 1000 + s)
            Z.append(math.exp(ideal_mix_is(gauss_mix, wide, S, 50, seed=s).log_Z_hat))
        ok, mean, se = within_std_errs(Z, math.exp(gauss_mix.exact_log_Z))
        assert ok, (mean, se)

    def test_ideal_needs_closed_form(self, bod):
        with pytest.raises(InvalidArgumentError):
            ideal_mix_is(bod, Gaussian([1.0, 1.0], 1.0), np.ones((3, 2)), 3)

    def test_needs_some_samples(self, gauss_mix, wide):
        with pytest.raises(InvalidArgumentError):
            bridge_optimal_iterative(gauss_mix, wide, None, 0)


class TestLocallyRestricted:
    @pytest.mark.parametrize("mode", ["IS", "RIS"])
    def test_inner_box_accuracy(self, gauss_mix, wide, mode):
        ests = []
        for s in range(10):
            S = _posterior_draws(gauss_mix, 2000, 200 + s)
            ests.append(locally_restricted(gauss_mix, wide, S, 2000, box=([-3.0], [3.0]), mode=mode, seed=s).log_Z_hat)
        assert np.mean(ests) == pytest.approx(gauss_mix.exact_log_Z, abs=0.05)

    def test_empty_region(self, gauss_mix, wide):
        S = _posterior_draws(gauss_mix, 20, 0)
        with pytest.raises(DegenerateWeightsError):
            locally_restricted(gauss_mix, wide, S, 20, box=([1e6], [1e6 + 1]), seed=0)

    def test_bad_mode(self, gauss_mix, wide):
        with pytest.raises(InvalidArgumentError):
            locally_restricted(gauss_mix, wide, np.zeros((2, 1)), 2, mode="bridge")
