import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlbench.densities import Gaussian
from mlbench.errors import InvalidArgumentError
from mlbench.importance import is_v1
from mlbench.kernels import IndependentProposal, run_mh
from mlbench.rng import make_rng
from mlbench.sequential import annealed_is, clais, lais, mtm_evidence, smc
from mlbench.targets import make_target
from mlbench.tempered import make_ladder
from conftest import within_std_errs


def _post_mean(model) -> float:
    post = model.params["posterior"]
    return float(post.weights @ post.means[:, 0])


class TestAnnealedIS:
    def test_unbiased(self, gauss_mix):
        L = make_ladder(5, 0.5)
        Z = [math.exp(annealed_is(gauss_mix, L, 50, seed=s).log_Z_hat) for s in range(200)]
        ok, mean, se = within_std_errs(Z, math.exp(gauss_mix.exact_log_Z))
        assert ok, (mean, se)

    def test_proper_weighting(self, gauss_mix):
        r = annealed_is(gauss_mix, make_ladder(20, 0.5), 5000, mcmc_steps_per_level=2, seed=1)
        w = np.exp(r.diagnostics["log_weights"] - r.diagnostics["log_weights"].max())
        est = float(w @ r.diagnostics["points"][:, 0] / w.sum())
        assert est == pytest.approx(_post_mean(gauss_mix), abs=0.2)

    def test_constant_likelihood_exact(self, constant):
        r = annealed_is(constant, make_ladder(6), 20, seed=0)
        assert r.log_Z_hat == pytest.approx(math.log(2.5), abs=1e-12)
        assert r.diagnostics["ess"] == pytest.approx(20.0)

    def test_single_level_is_naive(self, gauss_uniform):
        from mlbench.importance import naive_mc

        a = annealed_is(gauss_uniform, make_ladder(1), 300, seed=2).log_Z_hat
        assert a == naive_mc(gauss_uniform, 300, seed=2).log_Z_hat

    def test_evaluation_count(self, gauss_mix):
        r = annealed_is(gauss_mix, make_ladder(4), 10, mcmc_steps_per_level=3, seed=0)
        assert r.n_evals == 10 + 3 * 10 * 3

    def test_invalid(self, gauss_mix):
        with pytest.raises(InvalidArgumentError):
            annealed_is(gauss_mix, make_ladder(4), 0)


class TestSMC:
    def test_no_resampling_is_annealed_is(self, gauss_mix):
        L = make_ladder(8, 0.5)
        a = annealed_is(gauss_mix, L, 200, seed=3, step_scale=2.0)
        trace, b = smc(gauss_mix, L, 200, eps=0.0, seed=3, step_scale=2.0)
        np.testing.assert_array_equal(a.diagnostics["log_weights"], trace[-1].log_weights)
        assert a.log_Z_hat == b.log_Z_hat
        assert b.diagnostics["resampled"] == []

    @given(st.integers(0, 10_000), st.sampled_from([0.0, 0.3, 0.5, 1.0]))
    @settings(max_examples=25, deadline=None)
    def test_two_estimators_agree(self, seed, eps):
        m = make_target("gauss-mix", D=1, L=1.0)
        _, r = smc(m, make_ladder(6, 0.5), 50, eps=eps, seed=seed)
        assert r.diagnostics["log_Z1"] == pytest.approx(r.diagnostics["log_Z2"], rel=1e-12, abs=1e-12)

    def test_always_resample(self, gauss_mix):
        trace, r = smc(gauss_mix, make_ladder(5), 30, eps=1.0, seed=0)
        assert r.diagnostics["resampled"] == [1, 2, 3, 4, 5]
        assert len(trace) == 6 and len(r.diagnostics["ess_trace"]) == 6

    @pytest.mark.parametrize(
        "forward,backward,scale", [("mcmc_kernel", "anis_choice", None), ("random_walk", "symmetric", 0.5)]
    )
    def test_accuracy(self, gauss_mix, forward, backward, scale):
        # the random-walk weights telescope to pi(theta_K) / g(theta_0), heavy-tailed for wide steps
        ests = [
            smc(gauss_mix, make_ladder(30, 0.5), 500, forward=forward, backward=backward, seed=s, step_scale=scale)[
                1
            ].log_Z_hat
            for s in range(10)
        ]
        assert np.mean(ests) == pytest.approx(gauss_mix.exact_log_Z, abs=0.1)

    def test_unbiased_with_resampling(self, gauss_mix):
        Z = [math.exp(smc(gauss_mix, make_ladder(5, 0.5), 50, eps=0.5, seed=s)[1].log_Z_hat) for s in range(200)]
        ok, mean, se = within_std_errs(Z, math.exp(gauss_mix.exact_log_Z))
        assert ok, (mean, se)

    def test_evaluation_count(self, gauss_mix):
        _, r = smc(gauss_mix, make_ladder(4), 10, mcmc_steps_per_level=2, seed=0)
        assert r.n_evals == 10 + 4 * 10 * 2

    @pytest.mark.parametrize(
        "kw", [{"eps": 1.5}, {"forward": "random_walk", "backward": "anis_choice"}, {"forward": "gibbs"}]
    )
    def test_invalid(self, gauss_mix, kw):
        with pytest.raises(InvalidArgumentError):
            smc(gauss_mix, make_ladder(4), 10, **kw)


class TestMTM:
    def test_single_candidate_fixed_proposal_unbiased(self, gauss_mix):
        q = Gaussian([0.0], [[40.0]])
        Z = [
            math.exp(mtm_evidence(gauss_mix, q, N_candidates=1, T=50, adapt=False, seed=s)[1].log_Z_hat)
            for s in range(300)
        ]
        ok, mean, se = within_std_errs(Z, math.exp(gauss_mix.exact_log_Z))
        assert ok, (mean, se)

    def test_fixed_proposal_chain_moments(self, gauss_mix):
        q = Gaussian([0.0], [[40.0]])
        ch, _ = mtm_evidence(gauss_mix, q, N_candidates=5, T=20_000, adapt=False, seed=0, burn_in=100)
        x = ch.states[:, 0]
        assert x.mean() == pytest.approx(_post_mean(gauss_mix), abs=0.15)
        assert x.var() == pytest.approx(float(gauss_mix.params["posterior"].covs[0, 0, 0]) + 0.39, rel=0.1)

    def test_adaptive_accuracy(self, gauss_mix):
        reps = [mtm_evidence(gauss_mix, N_candidates=10, T=300, seed=s)[1] for s in range(10)]
        for key in ("log_Z1", "log_Z2"):
            vals = [r.diagnostics[key] for r in reps]
            assert np.mean(vals) == pytest.approx(gauss_mix.exact_log_Z, abs=0.05)

    def test_budget_and_burn_in(self, gauss_mix):
        ch, r = mtm_evidence(gauss_mix, N_candidates=4, T=100, seed=0, burn_in=10)
        assert r.n_evals == 400
        assert len(ch) == 90

    def test_first_step_accepted(self, gauss_mix):
        _, r = mtm_evidence(gauss_mix, N_candidates=3, T=5, seed=0)
        assert r.diagnostics["accepted"][0]

    @pytest.mark.parametrize("kw", [{"N_candidates": 0}, {"T": 0}, {"T": 5, "burn_in": 5}])
    def test_invalid(self, gauss_mix, kw):
        with pytest.raises(InvalidArgumentError):
            mtm_evidence(gauss_mix, **kw)


class TestLAIS:
    @pytest.mark.parametrize("mode", ["full", "temporal", "spatial", "standard"])
    def test_modes_unbiased(self, gauss_mix, mode):
        Z = [
            math.exp(lais(gauss_mix, n_chains=3, chain_len=20, q_cov=25.0, phi_mode=mode, seed=s).log_Z_hat)
            for s in range(200)
        ]
        ok, mean, se = within_std_errs(Z, math.exp(gauss_mix.exact_log_Z))
        assert ok, (mean, se)

    @pytest.mark.parametrize("mode", ["full", "temporal", "spatial", "standard"])
    def test_single_proposal_is_is_v1(self, gauss_mix, mode):
        r = lais(gauss_mix, 1, 1, q_cov=4.0, phi_mode=mode, seed=7)
        mu = r.diagnostics["upper_means"][0, 0]
        b = is_v1(gauss_mix, Gaussian(mu, 4.0), 1, seed=7)
        if mode == "standard":
            assert r.log_Z_hat == b.log_Z_hat
        else:
            assert r.log_Z_hat == pytest.approx(b.log_Z_hat, rel=1e-12)

    def test_evaluation_count(self, gauss_mix):
        assert lais(gauss_mix, 2, 15, q_cov=4.0, seed=0).n_evals == 2 * 2 * 15
        assert lais(gauss_mix, 1, 40, q_cov=4.0, phi_mode="recycle", seed=0).n_evals == 40

    def test_recycle_accuracy(self, gauss_mix):
        ests = [lais(gauss_mix, 1, 2000, q_cov=25.0, phi_mode="recycle", seed=s).log_Z_hat for s in range(10)]
        assert np.mean(ests) == pytest.approx(gauss_mix.exact_log_Z, abs=0.05)

    def test_tempered_upper_layer(self, gauss_mix):
        ests = [lais(gauss_mix, 4, 200, upper_betas=[0.5, 1.0, 1.0, 2.0], q_cov=9.0, seed=s).log_Z_hat for s in range(10)]
        assert np.mean(ests) == pytest.approx(gauss_mix.exact_log_Z, abs=0.05)

    @pytest.mark.parametrize("kw", [{"n_chains": 0}, {"phi_mode": "diagonal"}, {"upper_betas": -1.0}])
    def test_invalid(self, gauss_mix, kw):
        with pytest.raises(InvalidArgumentError):
            lais(gauss_mix, **{"chain_len": 5, **kw})


class TestCLAIS:
    @pytest.mark.parametrize("C", [1, 2, 3])
    def test_accuracy_from_exact_samples(self, gauss_mix, C):
        S = gauss_mix.params["posterior"].sample(make_rng(0), 2000)
        ests = [clais(gauss_mix, S, C_clusters=C, h=1.0, N_lower=2000, seed=s).log_Z_hat for s in range(10)]
        assert np.mean(ests) == pytest.approx(gauss_mix.exact_log_Z, abs=0.03)

    def test_unbiased_given_proposal(self, bod):
        ch = run_mh(bod, IndependentProposal.from_prior(bod), 2000, burn_in=0, seed=0)
        reps = [clais(bod, ch.states, 2, N_lower=200, seed=s).log_Z_hat for s in range(100)]
        ok, mean, se = within_std_errs(np.exp(reps), math.exp(bod.params["reference_log_Z"]), k=4)
        assert ok, (mean, se)

    def test_chain_evaluations_counted(self, gauss_mix):
        ch = run_mh(gauss_mix, IndependentProposal(Gaussian([0.0], [[40.0]])), 300, seed=0)
        assert clais(gauss_mix, ch, 2, N_lower=100, seed=0).n_evals == 400

    def test_invalid(self, gauss_mix):
        with pytest.raises(InvalidArgumentError):
            clais(gauss_mix, np.zeros((1, 1)), C_clusters=2)
        with pytest.raises(InvalidArgumentError):
            clais(gauss_mix, np.zeros((5, 1)), N_lower=0)
