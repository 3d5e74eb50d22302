import math

import numpy as np
import pytest
from scipy import stats

from mlbench.errors import InvalidArgumentError, UnsupportedTargetError
from mlbench.importance import harmonic_mean, naive_mc
from mlbench.rng import make_rng
from mlbench.tempered import (
    is_p,
    ladder_from_betas,
    make_ladder,
    path_sampling,
    power_posteriors,
    sample_rungs,
    stepping_stone,
)
from conftest import within_std_errs


class TestLadder:
    def test_uniform_spacing(self):
        np.testing.assert_array_equal(make_ladder(4).betas, [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_concentrated_near_zero(self):
        np.testing.assert_allclose(make_ladder(2, 0.25).betas, [0.0, 0.0625, 1.0])

    @pytest.mark.parametrize("K,alpha", [(10, 0.3), (1, 1.0), (50, 0.2)])
    def test_endpoints_and_order(self, K, alpha):
        b = make_ladder(K, alpha).betas
        assert b.size == K + 1 and b[0] == 0.0 and b[-1] == 1.0
        assert np.all(np.diff(b) > 0)

    @pytest.mark.parametrize("K,alpha", [(0, 1.0), (2.5, 1.0), (3, 0.0), (3, 1.5)])
    def test_invalid(self, K, alpha):
        with pytest.raises(InvalidArgumentError):
            make_ladder(K, alpha)

    @pytest.mark.parametrize("betas", [[0.0, 0.5], [0.1, 1.0], [0.0, 0.5, 0.5, 1.0], [1.0]])
    def test_explicit_invalid(self, betas):
        with pytest.raises(InvalidArgumentError):
            ladder_from_betas(betas)


class TestRungSampling:
    def test_prior_rung_matches_prior(self, gauss_uniform):
        rs = sample_rungs(gauss_uniform, [0.0], 2000, seed=0)
        assert stats.kstest(rs.points[0][:, 0], stats.uniform(-10, 20).cdf).pvalue > 0.01

    def test_exact_tempered_rung(self, std_normal):
        # prior N(0, 10^2) times exp(-beta theta^2 / 2): variance 1 / (0.01 + beta)
        rs = sample_rungs(std_normal, [0.5], 2000, sampler="exact", seed=1)
        sd = 1.0 / math.sqrt(0.01 + 0.5)
        assert stats.kstest(rs.points[0][:, 0], stats.norm(0, sd).cdf).pvalue > 0.01

    def test_mh_rungs_cost(self, gauss_mix):
        view = gauss_mix.counting()
        sample_rungs(view, [0.0, 0.3, 1.0], 100, sampler="mh", seed=0)
        assert view.n_evals == 300

    def test_exact_unavailable(self, bod):
        with pytest.raises(UnsupportedTargetError):
            sample_rungs(bod, [0.5], 10, sampler="exact")

    def test_unknown_sampler(self, bod):
        with pytest.raises(InvalidArgumentError):
            sample_rungs(bod, [0.5], 10, sampler="gibbs")


class TestISP:
    def test_beta_zero_is_naive(self, gauss_uniform):
        a = is_p(gauss_uniform, 0.0, 500, seed=3).log_Z_hat
        b = naive_mc(gauss_uniform, 500, seed=3).log_Z_hat
        assert a == b

    def test_beta_one_is_harmonic_mean(self, gauss_mix):
        a = is_p(gauss_mix, 1.0, 500, sampler="exact", seed=4).log_Z_hat
        S = gauss_mix.sample_tempered(1.0, make_rng(4), 500)
        assert a == pytest.approx(harmonic_mean(gauss_mix, S).log_Z_hat, rel=1e-12)

    def test_small_beta(self, gauss_uniform):
        # weights l^(-beta) grow heavy-tailed as beta increases; small beta stays well behaved
        ests = [is_p(gauss_uniform, 0.05, 20_000, seed=s).log_Z_hat for s in range(5)]
        assert np.mean(ests) == pytest.approx(gauss_uniform.exact_log_Z, abs=0.03)

    def test_beta_range(self, gauss_uniform):
        with pytest.raises(InvalidArgumentError):
            is_p(gauss_uniform, 1.5, 10)


class TestSteppingStone:
    def test_single_step_is_naive(self, gauss_uniform):
        a = stepping_stone(gauss_uniform, make_ladder(1), 700, seed=5).log_Z_hat
        b = naive_mc(gauss_uniform, 700, seed=5).log_Z_hat
        assert a == b

    def test_constant_likelihood_exact(self, constant):
        r = stepping_stone(constant, make_ladder(7, 0.4), 50, sampler="mh", seed=0)
        assert r.log_Z_hat == pytest.approx(math.log(2.5), abs=1e-12)

    def test_partial_estimates_track_tempered_evidence(self, gauss_uniform):
        L = make_ladder(5)
        parts = np.mean([stepping_stone(gauss_uniform, L, 2000, seed=s).diagnostics["log_Z_partial"] for s in range(10)], axis=0)
        exact = [gauss_uniform.exact_log_Z_beta(b) for b in L.betas]
        np.testing.assert_allclose(parts, exact, atol=0.05)

    def test_unbiased_in_natural_scale(self, gauss_uniform):
        Z = [math.exp(stepping_stone(gauss_uniform, make_ladder(3), 100, seed=s).log_Z_hat) for s in range(400)]
        ok, mean, se = within_std_errs(Z, math.exp(gauss_uniform.exact_log_Z))
        assert ok, (mean, se)

    def test_budget(self, gauss_uniform):
        assert stepping_stone(gauss_uniform, make_ladder(4), 25, seed=0).n_evals == 100

    def test_mh_sampler(self, gauss_mix):
        ests = [stepping_stone(gauss_mix, make_ladder(10, 0.3), 1000, sampler="mh", seed=s).log_Z_hat for s in range(5)]
        assert np.mean(ests) == pytest.approx(gauss_mix.exact_log_Z, abs=0.05)


class TestPowerPosteriors:
    @pytest.mark.parametrize("order", [0, 1, "1-corrected"])
    def test_constant_likelihood_exact(self, constant, order):
        r = power_posteriors(constant, make_ladder(4), 30, order=order, sampler="mh", seed=0)
        assert r.log_Z_hat == pytest.approx(math.log(2.5), abs=1e-12)

    def test_left_riemann_underestimates(self, gauss_uniform):
        # E_beta[log l] increases in beta, so the left sum is a lower bound
        r = power_posteriors(gauss_uniform, make_ladder(5), 20_000, order=0, seed=0)
        assert r.log_Z_hat < gauss_uniform.exact_log_Z - 1.0

    def test_correction_reduces_error(self, gauss_uniform):
        L = make_ladder(5)
        err = {}
        for order in (1, "1-corrected"):
            v = [power_posteriors(gauss_uniform, L, 20_000, order=order, seed=s).log_Z_hat for s in range(3)]
            err[order] = abs(np.mean(v) - gauss_uniform.exact_log_Z)
        assert err["1-corrected"] < err[1]

    def test_shared_samples(self, gauss_uniform):
        L = make_ladder(4)
        rs = sample_rungs(gauss_uniform, L.betas, 200, seed=0)
        a = power_posteriors(gauss_uniform, L, 200, samples=rs).log_Z_hat
        E = rs.mean_log_lik()
        assert a == pytest.approx(float(np.sum(np.diff(L.betas) * 0.5 * (E[1:] + E[:-1]))), rel=1e-14)

    def test_budget(self, gauss_uniform):
        assert power_posteriors(gauss_uniform, make_ladder(4), 20, seed=0).n_evals == 100

    def test_bad_order(self, gauss_uniform):
        with pytest.raises(InvalidArgumentError):
            power_posteriors(gauss_uniform, make_ladder(4), 20, order=2)


class TestPathSampling:
    def test_constant_likelihood_exact(self, constant):
        r = path_sampling(constant, 40, sampler="mh", mh_steps=3, seed=0)
        assert r.log_Z_hat == pytest.approx(math.log(2.5), abs=1e-12)

    @pytest.mark.parametrize("p_beta", ["uniform", ("beta", 0.5)])
    def test_unbiased(self, gauss_uniform, p_beta):
        ests = [path_sampling(gauss_uniform, 2000, p_beta=p_beta, seed=s).log_Z_hat for s in range(20)]
        ok, mean, se = within_std_errs(ests, gauss_uniform.exact_log_Z)
        assert ok, (mean, se)

    def test_mh_path(self, gauss_mix):
        r = path_sampling(gauss_mix, 300, sampler="mh", mh_steps=10, seed=0)
        assert r.n_evals == 3000
        assert r.log_Z_hat == pytest.approx(gauss_mix.exact_log_Z, abs=0.2)

    @pytest.mark.parametrize("p_beta", ["jeffreys", ("beta", -1.0), ("gamma", 1.0)])
    def test_bad_density(self, gauss_uniform, p_beta):
        with pytest.raises(InvalidArgumentError):
            path_sampling(gauss_uniform, 10, p_beta=p_beta)
