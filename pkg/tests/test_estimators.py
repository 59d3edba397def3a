import math

import numpy as np
import pytest
from scipy import stats
from scipy.special import ndtr

from cefis import densities as D
from cefis import estimators as E
from cefis.errors import AllWeightsZero, MissingGradient
from cefis.indicators import log_smooth_indicator
from cefis.problems import (LimitStateProblem, constant_problem, linear_problem,
                            quadratic_problem)


def cfg(**kw):
    return E.SolverConfig(**kw)


class TestWeightedCv:
    def test_examples(self):
        assert E.weighted_cv(np.full(7, 3.0)) == 0.0
        assert E.weighted_cv([1.0, 0.0]) == pytest.approx(1.0)
        assert E.weighted_cv([2.0, 0.0]) == E.weighted_cv([1.0, 0.0])

    def test_all_zero(self):
        with pytest.raises(AllWeightsZero):
            E.weighted_cv(np.zeros(4))


class TestIsEstimate:
    def test_matches_direct_formula(self):
        rng = np.random.default_rng(0)
        ind = (rng.random(200) < 0.3).astype(float)
        w = rng.random(200)
        p, cv = E.is_estimate(ind, np.log(w))
        p_ref = np.mean(ind * w)
        v_ref = (np.mean(ind * w**2) - p_ref**2) / 199
        assert p == pytest.approx(p_ref, rel=1e-14)
        assert cv == pytest.approx(math.sqrt(v_ref) / p_ref, rel=1e-12)

    def test_huge_log_weights(self):
        p, cv = E.is_estimate(np.array([1.0, 0.0, 1.0]), np.array([900.0, 2000.0, 899.0]))
        assert p == 1.0 and math.isfinite(cv)
        p, cv = E.is_estimate(np.array([0.0, 1.0]), np.array([0.0, -900.0]))
        assert p == 0.0 or p < 1e-300

    def test_no_failures(self):
        assert E.is_estimate(np.zeros(5), np.zeros(5)) == (0.0, math.inf)


class TestAdaptSmoothing:
    def test_standard_normal_example(self):
        g = np.random.default_rng(0).standard_normal(1000)
        upd = E.adapt_smoothing(g, np.ones(1000), math.inf, 1.5)
        cv = E.weighted_cv(np.exp(log_smooth_indicator(g, upd.s)))
        assert abs(cv - 1.5) <= 0.01

    def test_standard_normal_best_attainable(self):
        # cv(f) stays below ~1 for every s here, so the best reachable cv is
        # the hard indicator's; s stops at the edge of that plateau
        g = np.random.default_rng(0).standard_normal(1000)
        upd = E.adapt_smoothing(g, np.ones(1000), math.inf, 1.5)
        ind_cv = E.weighted_cv((g <= 0).astype(float))
        cv = E.weighted_cv(np.exp(log_smooth_indicator(g, upd.s)))
        assert abs(cv - ind_cv) <= E.PLATEAU_TOL + 1e-9
        assert upd.s > 1e-4 * np.percentile(np.abs(g), 50)

    def test_unreachable_target_keeps_gradients_finite(self):
        # a third of the samples fail: even the hard indicator has cv < 1.5
        rng = np.random.default_rng(6)
        g = np.r_[-rng.random(33), rng.random(67)]
        upd = E.adapt_smoothing(g, np.ones(100), 0.3, 1.5)
        lf = log_smooth_indicator(g, upd.s)
        assert np.all(np.isfinite(lf)) and np.min(lf[g > 0]) > -700

    def test_attainable_target_is_hit(self):
        g = np.random.default_rng(1).standard_normal(1000) + 2.0
        upd = E.adapt_smoothing(g, np.ones(1000), math.inf, 1.5)
        cv = E.weighted_cv(np.exp(log_smooth_indicator(g, upd.s)))
        assert abs(cv - 1.5) <= 0.01
        assert not upd.degenerate

    def test_respects_previous_smoothing(self):
        rng = np.random.default_rng(2)
        g = rng.standard_normal(500) + 1.0
        w = np.exp(0.3 * rng.standard_normal(500))
        upd = E.adapt_smoothing(g, w, 0.8, 1.5)
        assert 0 < upd.s <= 0.8

    def test_bracketed_root(self):
        rng = np.random.default_rng(3)
        g = rng.standard_normal(2000) + 2.5
        s_prev = 5.0
        upd = E.adapt_smoothing(g, np.ones(2000), s_prev, 1.5)
        cvs = [E.weighted_cv(np.exp(log_smooth_indicator(g, s))) for s in (upd.s * 0.9, upd.s * 1.1)]
        assert cvs[0] > 1.5 > cvs[1]

    def test_saturated_is_degenerate(self):
        g = -50.0 - np.random.default_rng(4).random(100)
        upd = E.adapt_smoothing(g, np.ones(100), 2.0, 1.5)
        assert upd.degenerate and upd.s == 1.0

    def test_log_weights_equivalent(self):
        rng = np.random.default_rng(5)
        g = rng.standard_normal(300) + 1.5
        w = rng.random(300) + 0.1
        a = E.adapt_smoothing(g, w, 3.0, 1.5)
        b = E.adapt_smoothing(g, np.log(w), 3.0, 1.5, log_weights=True)
        assert a.s == pytest.approx(b.s, rel=1e-12)


class TestMonteCarlo:
    def test_certain_and_impossible(self):
        rng = np.random.default_rng(0)
        r = E.run_mc(constant_problem(3, -1.0), 1000, rng)
        assert r.p_hat == 1.0 and r.cv_hat == 0.0
        r = E.run_mc(constant_problem(3, 1.0), 1000, rng)
        assert r.p_hat == 0.0 and math.isinf(r.cv_hat)

    def test_ten_percent(self):
        r = E.run_mc(linear_problem(2, 1.282), 10**5, np.random.default_rng(1))
        p = 1e-1
        assert abs(r.p_hat - p) <= 4 * math.sqrt(p * (1 - p) / 1e5)
        assert r.lsf_calls == 10**5


class TestCrossEntropy:
    def test_non_rare_single_level(self):
        r = E.run_ce(linear_problem(2, 0.0), cfg(n_per_level=1000), np.random.default_rng(0))
        assert r.converged and r.n_levels == 1
        assert abs(r.p_hat - 0.5) <= 4 * max(r.cv_hat * r.p_hat, math.sqrt(0.25 / 1000))

    def test_low_dimension_accuracy(self):
        pb = linear_problem(2, 3.5)
        ps = [E.run_ce(pb, cfg(n_per_level=2500), np.random.default_rng(s)).p_hat for s in range(20)]
        assert abs(np.mean(ps) / pb.reference_p - 1) <= 0.10

    def test_call_count(self):
        r = E.run_ce(linear_problem(2, 2.0), cfg(n_per_level=2000), np.random.default_rng(3))
        assert r.converged
        # one extra sample set is drawn from the final fitted density
        assert r.lsf_calls == 2000 * (r.n_levels + 1)
        assert r.grad_calls == 0

    def test_stalled_run_counts(self):
        # the elite variance collapses and the threshold stalls above zero
        r = E.run_ce(linear_problem(2, 3.0), cfg(n_per_level=500, t_max=10),
                     np.random.default_rng(3))
        assert not r.converged and r.flags["budget_exhausted"]
        assert r.n_levels == 11 and r.lsf_calls == 500 * 11

    def test_budget_exhaustion_flagged(self):
        r = E.run_ce(linear_problem(2, 6.0), cfg(n_per_level=200, t_max=1), np.random.default_rng(0))
        assert not r.converged and r.flags.get("budget_exhausted")


class TestImprovedCe:
    def test_non_rare_single_level(self):
        r = E.run_ice(linear_problem(2, 0.0), cfg(n_per_level=1000), np.random.default_rng(0))
        assert r.converged and r.n_levels == 1
        assert r.p_hat == pytest.approx(0.5, abs=4 * math.sqrt(0.25 / 1000))

    def test_low_dimension_accuracy(self):
        pb = linear_problem(2, 3.5)
        ps = [E.run_ice(pb, cfg(n_per_level=1000), np.random.default_rng(s)).p_hat for s in range(20)]
        assert abs(np.mean(ps) / pb.reference_p - 1) <= 0.10

    def test_weights_cv_matches_target(self):
        r = E.run_ice(linear_problem(2, 3.5), cfg(n_per_level=1000), np.random.default_rng(1))
        for lv in r.per_level[:-1]:
            assert abs(lv.weights_cv - 1.5) <= 0.05


class TestIcered:
    def test_certain_failure(self):
        r = E.run_icered(constant_problem(4, -1.0), cfg(n_per_level=100), np.random.default_rng(0))
        assert r.converged and r.n_levels == 1 and r.p_hat == 1.0

    def test_missing_gradient(self):
        pb = LimitStateProblem(2, lambda th: 1.0 - th[:, 0])
        with pytest.raises(MissingGradient):
            E.run_icered(pb, cfg(n_per_level=100), np.random.default_rng(0))

    def test_counters(self):
        N = 200
        r = E.run_icered(linear_problem(50, 3.0), cfg(n_per_level=N), np.random.default_rng(2))
        assert r.lsf_calls == N * r.n_levels
        assert r.grad_calls == N * (r.n_levels - 1)
        r = E.run_icered(linear_problem(50, 3.0), cfg(n_per_level=N, n_grad=50),
                         np.random.default_rng(2))
        assert r.grad_calls == 50 * (r.n_levels - 1)

    def test_rank_one_linear_direction(self):
        d = 80
        r = E.run_icered(linear_problem(d, 3.0), cfg(n_per_level=250), np.random.default_rng(4))
        assert all(rank == 1 for _, _, rank in r.spectra)
        v = r.final_basis.phi_r[:, 0]
        assert abs(v @ np.ones(d)) / math.sqrt(d) >= 1 - 1e-8

    def test_deterministic(self):
        pb = linear_problem(30, 3.0)
        a = E.run_icered(pb, cfg(n_per_level=200), np.random.default_rng(7))
        b = E.run_icered(pb, cfg(n_per_level=200), np.random.default_rng(7))
        assert a.to_dict() == b.to_dict()
        assert a.p_hat == b.p_hat

    def test_weights_finite_and_nonnegative(self):
        _, state = E.run_icered(linear_problem(20, 3.5), cfg(n_per_level=250),
                                np.random.default_rng(5), return_state=True)
        w = np.exp(state.log_w)
        assert np.all(np.isfinite(w)) and np.all(w >= 0)

    def test_unbiased_at_ten_percent(self):
        pb = linear_problem(10, 1.282)
        ps = np.array([E.run_icered(pb, cfg(n_per_level=250), np.random.default_rng(100 + s)).p_hat
                       for s in range(100)])
        se = ps.std(ddof=1) / math.sqrt(len(ps))
        assert abs(ps.mean() - float(ndtr(-1.282))) <= 3 * se

    def test_full_rank_matches_ice(self):
        # d = 2 quadratic: the FIS is the whole space, so iCEred is iCE
        pb = quadratic_problem(2, 3.0, 2.0)
        a = [E.run_icered(pb, cfg(n_per_level=500, eps=1e-12), np.random.default_rng(s)).p_hat
             for s in range(50)]
        b = [E.run_ice(pb, cfg(n_per_level=500), np.random.default_rng(1000 + s)).p_hat
             for s in range(50)]
        assert stats.ttest_ind(a, b, equal_var=False).pvalue > 0.01
        assert stats.ks_2samp(a, b).pvalue > 0.01


class TestRefine:
    def test_immediate_exit(self):
        pb = linear_problem(10, 2.0)
        c = cfg(n_per_level=2000, delta_bar=0.5)
        base, state = E.run_icered(pb, c, np.random.default_rng(0), return_state=True)
        assert base.cv_hat <= 0.5
        r = E.refine(state, c, np.random.default_rng(1))
        assert r.lsf_calls == base.lsf_calls and r.p_hat == base.p_hat
        assert r.flags["refine_batches"] == 0

    def test_drives_cv_down_without_gradients(self):
        pb = linear_problem(100, 3.5)
        c = cfg(n_per_level=100, refine=False)
        base, state = E.run_icered(pb, c, np.random.default_rng(3), return_state=True)
        r = E.refine(state, c, np.random.default_rng(4))
        assert r.cv_hat <= 0.06
        assert r.grad_calls == base.grad_calls
        if base.cv_hat > 0.05:
            assert r.lsf_calls > base.lsf_calls
        assert (r.lsf_calls - base.lsf_calls) % c.m_increment == 0

    def test_extra_weights_use_reduced_ratio(self):
        # the complement factors of prior and biasing cancel exactly
        rng = np.random.default_rng(5)
        Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        from cefis.fis import FisBasis
        basis = FisBasis(np.zeros(6), 2, Q[:, :2], Q[:, 2:])
        red = D.GaussianParams([1.0, -0.5], [[0.5, 0.1], [0.1, 0.8]])
        tt = np.hstack([D.sample_gaussian(red, 20, rng), rng.standard_normal((20, 4))])
        full = D.std_normal_logpdf(tt) - D.composite_logpdf(tt, D.CompositeBiasing(red, basis))
        reduced = D.std_normal_logpdf(tt[:, :2]) - D.gaussian_logpdf(tt[:, :2], red)
        np.testing.assert_allclose(full, reduced, rtol=1e-12, atol=1e-12)


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(n_per_level=1), dict(rho=1.0), dict(delta=0),
                                    dict(eps=-1), dict(delta_bar=0), dict(t_max=0),
                                    dict(n_grad=0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            E.SolverConfig(**kw)

    def test_defaults(self):
        c = E.SolverConfig()
        assert (c.delta, c.eps, c.delta_bar, c.m_increment, c.rho) == (1.5, 0.01, 0.05, 50, 0.1)

    def test_run_method_dispatch(self):
        r = E.run_method("mc", constant_problem(2, -1.0), cfg(mc_samples=10))
        assert r.p_hat == 1.0
        with pytest.raises(ValueError):
            E.run_method("sus", constant_problem(2, -1.0), cfg())
