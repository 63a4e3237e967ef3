"""Tests for the analytic error and cost estimators, pinned to hand-computed
plug-in values."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from hmatgp.diagnostics import (ComparisonReport, alpha_leaf_estimate,
                                cost_model, dyadic_chain,
                                empirical_error_vs_bound,
                                expected_range_error, fit_lognormal,
                                hierarchical_error_estimate,
                                range_error_threshold, sample_od_errors,
                                svd_error_bound, tree_depth)


class TestExpectedRangeError:
    def test_plug_in_value(self):
        # k=2, p=2, m=n=10, sigma=1: sqrt(1+2/1) * sqrt(10-2) = sqrt(3)*sqrt(8)
        got = expected_range_error(10, 10, 2, 2, 1.0)
        assert np.isclose(got, math.sqrt(3.0) * math.sqrt(8.0), rtol=1e-14)

    def test_scales_linearly_in_sigma(self):
        assert np.isclose(expected_range_error(100, 50, 5, 10, 2.0),
                          2.0 * expected_range_error(100, 50, 5, 10, 1.0))

    def test_preconditions(self):
        with pytest.raises(ValueError):
            expected_range_error(10, 10, 1, 2, 1.0)
        with pytest.raises(ValueError):
            expected_range_error(10, 10, 2, 1, 1.0)
        with pytest.raises(ValueError):
            expected_range_error(4, 4, 3, 2, 1.0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 20), st.integers(2, 20))
    def test_more_oversampling_never_hurts(self, k, p):
        m = n = k + p + 25
        e1 = expected_range_error(m, n, k, p, 1.0)
        e2 = expected_range_error(m, n, k, p + 1, 1.0)
        assert e2 <= e1 + 1e-12


class TestRangeErrorThreshold:
    def test_failure_probability_form(self):
        # with t = e and u = sqrt(2p) the tail probability is 3 e^-p
        p = 6
        _, fail = range_error_threshold(50, 50, 4, p, math.e, math.sqrt(2 * p), 1.0)
        assert np.isclose(fail, 3.0 * math.exp(-p), rtol=1e-12)

    def test_value_at_p5(self):
        p = 5
        _, fail = range_error_threshold(50, 50, 4, p, math.e, math.sqrt(2 * p), 1.0)
        assert np.isclose(fail, 3.0 * math.exp(-5), rtol=1e-12)
        assert np.isclose(fail, 0.020213, atol=1e-5)

    def test_threshold_formula(self):
        m = n = 30
        k, p, t, u, s = 4, 4, 2.0, 3.0, 0.5
        thr, _ = range_error_threshold(m, n, k, p, t, u, s)
        expect = ((1 + t * math.sqrt(3 * k / (p + 1))) * math.sqrt(n - k)
                  + u * t * math.e * math.sqrt(k + p) / (p + 1)) * s
        assert np.isclose(thr, expect, rtol=1e-14)

    def test_threshold_above_mean(self):
        for p in (4, 6, 10):
            mean = expected_range_error(60, 60, 5, p, 1.0)
            thr, _ = range_error_threshold(60, 60, 5, p, math.e,
                                           math.sqrt(2 * p), 1.0)
            assert thr > mean

    def test_preconditions(self):
        with pytest.raises(ValueError):
            range_error_threshold(10, 10, 2, 3, math.e, 2.0, 1.0)
        with pytest.raises(ValueError):
            range_error_threshold(10, 10, 2, 4, 0.5, 2.0, 1.0)


class TestSvdErrorBound:
    def test_full_rank_limit(self):
        # k = n collapses the bound to (1 + sqrt(k)) eps
        k = 16
        assert np.isclose(svd_error_bound(k, k, 1e-3),
                          (1.0 + math.sqrt(k)) * 1e-3, rtol=1e-14)

    def test_plug_in_value(self):
        # k=45, n=4000, eps=1e-3
        got = svd_error_bound(45, 4000, 1e-3)
        expect = (1.0 + math.sqrt(45 + 4 * 45 * (4000 - 45))) * 1e-3
        assert np.isclose(got, expect, rtol=1e-14)
        assert np.isclose(got, 0.844768, atol=1e-5)

    def test_rejects_k_above_n(self):
        with pytest.raises(ValueError):
            svd_error_bound(10, 5, 1e-3)


class TestAlphaLeaf:
    def test_plug_in_value(self):
        # n_min=100, sigma_n^2=0.01 -> sqrt(100)/0.1 = 100/sqrt(0.01)... the
        # estimate uses the noise standard deviation directly
        assert np.isclose(alpha_leaf_estimate(100, 0.1), 100.0, rtol=1e-14)
        assert np.isclose(alpha_leaf_estimate(100, math.sqrt(0.1)),
                          10.0 / math.sqrt(0.1), rtol=1e-12)
        assert np.isclose(10.0 / math.sqrt(0.1), 31.6227766, atol=1e-6)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            alpha_leaf_estimate(0, 0.1)
        with pytest.raises(ValueError):
            alpha_leaf_estimate(10, 0.0)


class TestHierarchicalErrorEstimate:
    def test_zero_block_errors_give_zero(self):
        budget = hierarchical_error_estimate([(1.0, 0.0), (1.0, 0.0)], 2.0, 1.0)
        assert budget.eps_d0 == 0.0

    def test_single_level_closed_form(self):
        kappa, alpha, beta, eps_od, seed = 1.5, 2.0, 0.7, 1e-3, 1e-4
        budget = hierarchical_error_estimate([(beta, eps_od)], alpha, kappa,
                                             eps_seed=seed)
        a = kappa * alpha**2 * beta**4
        b = 2.0 * kappa * alpha**3 * beta**3 * eps_od
        assert np.isclose(budget.eps_d0, a * seed + b, rtol=1e-14)
        rec = budget.levels[0]
        assert np.isclose(rec.a, a) and np.isclose(rec.b, b)

    def test_seed_equals_chained_recursion(self):
        # running deep levels first and feeding eps_d0 into the rest must
        # match the single uninterrupted recursion
        levels = [(0.9, 1e-4), (0.8, 2e-4), (1.1, 5e-5), (0.95, 1e-4)]
        full = hierarchical_error_estimate(levels, 3.0, 1.2)
        lower = hierarchical_error_estimate(levels[:2], 3.0, 1.2)
        alpha_mid = 1.2 * levels[1][0]**2 * lower.levels[1].alpha**2
        upper = hierarchical_error_estimate(levels[2:], alpha_mid, 1.2,
                                            eps_seed=lower.eps_d0)
        assert np.isclose(upper.eps_d0, full.eps_d0, rtol=1e-12)

    def test_monotone_in_block_errors(self):
        small = hierarchical_error_estimate([(1.0, 1e-5)] * 3, 2.0, 1.0)
        large = hierarchical_error_estimate([(1.0, 1e-3)] * 3, 2.0, 1.0)
        assert large.eps_d0 > small.eps_d0

    def test_rejects_bad_alpha(self):
        with pytest.raises(ValueError):
            hierarchical_error_estimate([(1.0, 1e-4)], 0.0, 1.0)


class TestDyadicChain:
    def test_example_5000_eta_105(self):
        shapes, n_min = dyadic_chain(5000, 105)
        # 5000 -> (1000, 4000) -> (1000, 3000) -> (1000, 2000) -> (1000, 1000)
        # -> (100, 900) -> ... -> (100, 100)
        assert n_min == 100
        assert shapes[-1] == (1000, 4000)
        assert shapes[0] == (100, 100)
        assert all(b in (100, 1000) for b, _ in shapes)

    def test_no_split_below_cutoff(self):
        shapes, n_min = dyadic_chain(80, 100)
        assert shapes == [] and n_min == 80

    def test_shapes_sum_back_to_n(self):
        shapes, n_min = dyadic_chain(12345, 50)
        assert n_min + sum(b for b, _ in shapes) == 12345
        # deepest-first: each remainder equals the next block's larger side
        for (b1, r1), (_, r2) in zip(shapes, shapes[1:]):
            assert b1 + r1 == r2

    def test_depth_consistency(self):
        assert tree_depth(80, 100) == 0
        assert tree_depth(101, 100) == 1
        assert tree_depth(5000, 105) >= len(dyadic_chain(5000, 105)[0])


class TestCostModel:
    def test_solve_bound_example(self):
        # n=1e6, k=50, n_min=100, c_sp=2: 3 * C1 * k * n * ln(n)
        rep = cost_model(10**6, 50, 100)
        assert rep.c1 == 400
        assert np.isclose(rep.solve_bound,
                          3.0 * 400 * 50 * 1e6 * math.log(1e6), rtol=1e-14)

    def test_rank_one_truncation_equals_storage(self):
        rep = cost_model(10**5, 1, 50)
        assert np.isclose(rep.truncation_bound, rep.storage_bound, rtol=1e-14)

    def test_truncation_linear_in_k(self):
        r1 = cost_model(10**5, 10, 50)
        r2 = cost_model(10**5, 20, 50)
        assert np.isclose(r2.truncation_bound, 2.0 * r1.truncation_bound)
        assert np.isclose(r2.solve_bound, 2.0 * r1.solve_bound)

    def test_matvec_band(self):
        rep = cost_model(10**4, 5, 100)
        assert rep.matvec_low <= rep.matvec_high
        assert np.isclose(rep.matvec_high, 2.0 * rep.matvec_low)

    def test_validation(self):
        with pytest.raises(ValueError):
            cost_model(0, 1, 1)


class TestFitLognormal:
    def test_roundtrip_moments(self):
        mean, thr, fp = 1e-3, 5e-3, 0.02
        mu, sigma = fit_lognormal(mean, thr, fp)
        assert sigma > 0
        # E[X] = exp(mu + sigma^2/2)
        assert np.isclose(math.exp(mu + 0.5 * sigma**2), mean, rtol=1e-10)
        # P(X > thr) = Phi^c((ln thr - mu)/sigma)
        p = norm.sf((math.log(thr) - mu) / sigma)
        assert np.isclose(p, fp, rtol=1e-6)

    def test_sampling_matches_fit(self):
        # parameters chosen so both constraints are exactly satisfiable
        mu, sigma = fit_lognormal(2e-4, 2e-3, 0.01)
        x = sample_od_errors(np.random.default_rng(0), mu, sigma, 200_000)
        assert np.isclose(x.mean(), 2e-4, rtol=0.02)
        assert np.isclose((x > 2e-3).mean(), 0.01, atol=0.002)

    def test_infeasible_pair_falls_back_conservatively(self):
        # when no lognormal matches both constraints the fit keeps the mean
        # and lands below the requested tail probability
        mu, sigma = fit_lognormal(2e-4, 1e-3, 0.05)
        assert sigma > 0
        assert np.isclose(math.exp(mu + 0.5 * sigma**2), 2e-4, rtol=1e-10)
        p = norm.sf((math.log(1e-3) - mu) / sigma)
        assert p <= 0.05

    def test_validation(self):
        with pytest.raises(ValueError):
            fit_lognormal(-1.0, 1.0, 0.1)
        with pytest.raises(ValueError):
            fit_lognormal(1.0, 1.0, 1.5)


class TestComparison:
    def test_identical_distributions_zero_margin(self):
        x = np.array([1e-3, 2e-3, 5e-4])
        rep = empirical_error_vs_bound(x, x)
        assert np.isclose(rep.margin, 0.0, atol=1e-14)
        assert rep.dominated

    def test_dominance_verdict(self):
        big = np.full(10, 1e-2)
        small = np.full(10, 1e-6)
        assert empirical_error_vs_bound(big, small).dominated
        assert not empirical_error_vs_bound(small, big).dominated

    def test_quantiles_ordered(self):
        rng = np.random.default_rng(1)
        rep = empirical_error_vs_bound(rng.lognormal(-8, 1, 100),
                                       rng.lognormal(-10, 1, 100))
        assert isinstance(rep, ComparisonReport)
        assert np.all(np.diff(rep.analytic_quantiles) >= 0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            empirical_error_vs_bound([], [1.0])
