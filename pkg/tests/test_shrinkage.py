"""Estimator constructors and data-driven weight selection."""

import numpy as np
import pytest

from svshrink import linalg, risk, shrinkage
from svshrink.errors import DegenerateSpectrumError, DomainError, ParameterError
from svshrink.linalg import ShrinkagePlan, SvdFactorization
from svshrink.models import Gamma, Gaussian, Poisson
from svshrink.shrinkage import EstimatorSpec

from helpers import grid_argmin, rank_one_positive


def synthetic_fact(sigmas, n=None, m=None) -> SvdFactorization:
    """Factorization with the requested spectrum and canonical vectors."""
    sigmas = np.asarray(sigmas, dtype=float)
    k = len(sigmas)
    n = n or k
    m = m or k
    return SvdFactorization(sigmas, np.eye(n)[:, :k], np.eye(m)[:, :k])


class TestApply:
    def test_soft_threshold_zero_is_identity(self):
        rng = np.random.default_rng(0)
        y = rng.standard_normal((6, 4))
        fact = linalg.svd(y)
        spec = EstimatorSpec.soft_threshold(0.0, Gaussian(1.0))
        np.testing.assert_allclose(shrinkage.apply(spec, fact), y, atol=1e-12)

    def test_full_rank_pca_is_identity(self):
        rng = np.random.default_rng(1)
        y = rng.standard_normal((5, 7))
        fact = linalg.svd(y)
        spec = EstimatorSpec.pca(5, Gaussian(1.0))
        np.testing.assert_allclose(shrinkage.apply(spec, fact), y, atol=1e-12)

    def test_threshold_above_top_gives_zero(self):
        rng = np.random.default_rng(2)
        y = rng.standard_normal((4, 4))
        fact = linalg.svd(y)
        spec = EstimatorSpec.soft_threshold(fact.singular_values[0] + 1.0, Gaussian(1.0))
        np.testing.assert_array_equal(shrinkage.apply(spec, fact), np.zeros((4, 4)))

    def test_clamp_floor(self):
        rng = np.random.default_rng(3)
        fact = linalg.svd(rng.standard_normal((4, 4)))
        spec = EstimatorSpec.pca(4, Gamma(3.0), clamp_floor=1e-2)
        assert shrinkage.apply(spec, fact).min() >= 1e-2

    def test_spec_config_round_trip(self):
        plan = ShrinkagePlan((1, 3), {1: 0.9, 3: 0.2}, clamp_floor=1e-6)
        for spec in (
            EstimatorSpec.pca(2, Gaussian(0.5)),
            EstimatorSpec.soft_threshold(1.5, Gamma(3.0), clamp_floor=1e-6),
            EstimatorSpec.weighted(plan, Poisson(), clamp_floor=1e-6),
        ):
            assert EstimatorSpec.from_config(spec.to_config()) == spec


class TestWeightsGaussian:
    def test_vanishing_noise_gives_unit_weights(self):
        rng = np.random.default_rng(4)
        fact = linalg.svd(rng.standard_normal((8, 10)))
        plan = shrinkage.weights_gaussian(fact, tau=1e-12)
        assert all(w == 1.0 for w in plan.weights.values())

    def test_dominant_spike_approximation(self):
        # With sigma_1 far above a well-separated tail the pair terms tend to
        # one, so w_1 ~ 1 - tau^2 (1 + 2 (k - 1)) / sigma_1^2 on a square matrix.
        sigmas = np.array([50.0, 2.0, 1.5, 1.0, 0.5])
        fact = synthetic_fact(sigmas)
        tau = 0.3
        plan = shrinkage.weights_gaussian(fact, tau, active_set=[1])
        approx = 1.0 - tau**2 * (1 + 2 * 4) / 50.0**2
        assert plan.weights[1] == pytest.approx(approx, abs=1e-5)

    def test_matches_per_coordinate_grid_argmin(self):
        rng = np.random.default_rng(5)
        y = rng.standard_normal((7, 9))
        fact = linalg.svd(y)
        tau = 0.4
        plan = shrinkage.weights_gaussian(fact, tau)
        s = fact.singular_values

        def sure_at(k, w):
            weights = np.array([plan.weights[i] for i in range(1, 8)])
            weights[k - 1] = w
            values = weights * s
            derivs = weights.copy()
            est = linalg.compose(fact, values)
            div = risk.divergence_closed_form(fact, values, derivs)
            return risk.sure_gaussian(y, est, tau, div).value

        for k in (1, 3, 7):
            best = grid_argmin(lambda w: sure_at(k, w), 0.0, 1.0, 1e-4)
            assert abs(plan.weights[k] - best) <= 1e-4 + 1e-12

    def test_inactive_indices_absent(self):
        fact = synthetic_fact([5.0, 3.0, 1.0])
        plan = shrinkage.weights_gaussian(fact, 0.2, active_set=[1, 3])
        assert plan.active_set == (1, 3)
        assert 2 not in plan.weights

    def test_monotone_in_leading_value(self):
        tail = [2.0, 1.5, 1.0, 0.5]
        tau = 0.25
        previous = -1.0
        for top in np.linspace(3.0, 20.0, 12):
            fact = synthetic_fact([top] + tail)
            w = shrinkage.weights_gaussian(fact, tau, active_set=[1]).weights[1]
            assert w >= previous - 1e-12
            previous = w

    def test_degenerate_spectrum_raises(self):
        fact = synthetic_fact([2.0, 2.0, 1.0])
        with pytest.raises(DegenerateSpectrumError):
            shrinkage.weights_gaussian(fact, 0.3, active_set=[1])


class TestWeight1GammaSukls:
    def test_inactive_gate(self):
        fact = synthetic_fact([3.0, 1.0])
        y = np.ones((2, 2))
        assert shrinkage.weight1_gamma_sukls(y, fact, 3.0, active_set=[2]) == 0.0

    def test_large_shape_limit_on_exact_rank_one(self):
        # Y exactly rank one and positive: the ratio sum equals m n, so the
        # bracket tends to 1 and the weight to 1 as L grows.
        y = rank_one_positive(12, 9, 10.0)
        fact = linalg.svd(y)
        w = shrinkage.weight1_gamma_sukls(y, fact, 1e7)
        assert w == pytest.approx(1.0, abs=1e-5)

    def test_requires_positive_observations(self):
        y = np.ones((3, 3))
        y[1, 1] = 0.0
        with pytest.raises(DomainError):
            shrinkage.weight1_gamma_sukls(y, synthetic_fact([1.0, 0.5, 0.2]), 3.0)

    def test_requires_shape_above_two(self):
        y = np.ones((2, 2)) + np.eye(2)
        with pytest.raises(ParameterError):
            shrinkage.weight1_gamma_sukls(y, linalg.svd(y), 2.0)

    def test_matches_numeric_minimizer(self):
        # Closed form against a one-dimensional bounded minimization of the
        # synthesis-KL estimate on a rank-one Gamma instance.
        L = 3.0
        x = rank_one_positive(40, 40, 40.0)
        model = Gamma(L)
        gaps = []
        for i in range(6):
            y = model.sample(x, np.random.default_rng(np.random.SeedSequence([6, i])))
            fact = linalg.svd(y)
            s = fact.singular_values
            closed = shrinkage.weight1_gamma_sukls(y, fact, L)

            def sukls_of(w):
                values = np.zeros_like(s)
                values[0] = w * s[0]
                derivs = np.zeros_like(s)
                derivs[0] = w
                est = linalg.compose(fact, values)
                div = risk.divergence_closed_form(fact, values, derivs)
                return risk.sukls_gamma(y, est, L, div).value

            numeric = shrinkage.minimize_bounded(sukls_of, 0.0, 1.0, xatol=1e-8)
            gaps.append(abs(closed - numeric))
        assert np.median(gaps) < 1e-3


class TestWeight1Poisson:
    def test_ratio_capped_at_one(self):
        y = np.array([[4.0, 2.0], [2.0, 1.0]])  # exactly rank one, sum 9
        fact = linalg.svd(y)
        assert shrinkage.weight1_poisson_pukla(y, fact) == 1.0

    def test_direct_ratio(self):
        # Scale the rank-one estimate so its total is 125 against 100 counts.
        y = np.array([[4.0, 2.0], [2.0, 1.0]]) * 4  # rank one, total 36
        fact = linalg.svd(y)
        scaled = SvdFactorization(
            fact.singular_values * 125.0 / 36.0, fact.left_vectors, fact.right_vectors
        )
        y_counts = y / 36.0 * 100.0
        y_counts = np.round(y_counts)  # 11,6,6,3 -> adjust to reach 100 exactly
        y_counts[0, 0] += 100 - y_counts.sum()
        w = shrinkage.weight1_poisson_pukla(y_counts, scaled)
        assert w == pytest.approx(100.0 / 125.0, rel=1e-12)

    def test_degenerate_rank_one_total(self):
        fact = synthetic_fact([0.0, 0.0])
        with pytest.raises(DomainError):
            shrinkage.weight1_poisson_pukla(np.zeros((2, 2)), fact)

    def test_matches_exact_analysis_kl_minimizer(self):
        x = rank_one_positive(15, 10, 55.0)
        y = Poisson().sample(x, np.random.default_rng(7))
        fact = linalg.svd(y)
        closed = shrinkage.weight1_poisson_pukla(y, fact)

        def pukla_of(w):
            def values(s):
                out = np.zeros_like(s)
                out[0] = w * s[0]
                return out

            def derivs(s):
                out = np.zeros_like(s)
                out[0] = w
                return out

            fn = linalg.SpectralFunction(values, derivs, 1e-6)
            return risk.pukla_poisson(y, fn, mode="exact").value

        numeric = shrinkage.minimize_bounded(pukla_of, 0.0, 1.0, xatol=1e-9, maxiter=500)
        assert abs(closed - numeric) < 1e-6


class TestWeight1PoissonPureExact:
    def test_all_zero_counts(self):
        assert shrinkage.weight1_poisson_pure_exact(np.zeros((3, 3))) == 0.0

    def test_hand_enumeration_single_count(self):
        # Y = [[2,0],[0,0]]: the only downdate is at (0,0) and leaves [[1,0],[0,0]],
        # whose top singular triple is (1, e1, e1).  The weight is
        # 2 * 1 * 1 * 1 / sigma_1^2 = 2 / 4.
        y = np.array([[2.0, 0.0], [0.0, 0.0]])
        assert shrinkage.weight1_poisson_pure_exact(y) == pytest.approx(0.5, rel=1e-12)

    def test_hand_enumeration_count_three(self):
        y = np.array([[3.0, 0.0], [0.0, 0.0]])
        assert shrinkage.weight1_poisson_pure_exact(y) == pytest.approx(2.0 / 3.0, rel=1e-12)

    def test_close_to_approx_pure_minimizer(self):
        x = rank_one_positive(15, 10, 55.0)
        y = Poisson().sample(x, np.random.default_rng(8))
        exact = shrinkage.weight1_poisson_pure_exact(y)
        rng = np.random.default_rng(9)
        plan = shrinkage.optimize_weights_greedy(
            y, Poisson(), "pure", [1], clamp_floor=1e-6, rng=rng
        )
        assert abs(plan.weights[1] - exact) <= 0.05 * max(exact, 1e-12)


class TestGreedyWeights:
    def test_matches_gaussian_closed_form(self):
        rng = np.random.default_rng(10)
        y = rng.standard_normal((8, 6))
        tau = 0.35
        fact = linalg.svd(y)
        closed = shrinkage.weights_gaussian(fact, tau)
        greedy = shrinkage.optimize_weights_greedy(
            y, Gaussian(tau), "sure", range(1, 7), fact=fact
        )
        for k in range(1, 7):
            assert greedy.weights[k] == pytest.approx(closed.weights[k], abs=1e-4)

    def test_empty_active_set(self):
        y = np.random.default_rng(11).standard_normal((4, 4))
        plan = shrinkage.optimize_weights_greedy(y, Gaussian(0.5), "sure", [])
        assert plan.active_set == ()
        np.testing.assert_array_equal(plan.values(np.ones(4)), np.zeros(4))

    def test_gamma_rank_one_matches_closed_form(self):
        L = 3.0
        x = rank_one_positive(25, 20, 25.0)
        y = Gamma(L).sample(x, np.random.default_rng(12))
        fact = linalg.svd(y)
        closed = shrinkage.weight1_gamma_sukls(y, fact, L)
        greedy = shrinkage.optimize_weights_greedy(
            y, Gamma(L), "sukls", [1], clamp_floor=1e-6, rng=np.random.default_rng(13), fact=fact
        )
        assert greedy.weights[1] == pytest.approx(closed, abs=1e-4)


class TestSoftThresholdFit:
    def test_noiseless_low_rank_gives_tiny_threshold(self):
        rng = np.random.default_rng(14)
        u, _ = np.linalg.qr(rng.standard_normal((10, 3)))
        v, _ = np.linalg.qr(rng.standard_normal((8, 3)))
        y = (u * [5.0, 4.0, 3.0]) @ v.T
        lam = shrinkage.soft_threshold_fit(y, Gaussian(1e-12), "sure")
        assert lam <= 1e-4 * 5.0

    def test_pure_noise_thresholds_out_everything(self):
        fitted, leftovers = [], []
        for i in range(20):
            rng = np.random.default_rng(np.random.SeedSequence([15, i]))
            y = 0.1 * rng.standard_normal((100, 150))
            fact = linalg.svd(y)
            lam = shrinkage.soft_threshold_fit(y, Gaussian(0.1), "sure", fact=fact)
            fitted.append(lam / fact.singular_values[0])
            estimate = linalg.soft_threshold_function(lam).apply_to_factorization(fact)
            leftovers.append(np.sum(estimate**2) / np.sum(y**2))
        assert np.median(fitted) >= 0.95
        assert np.median(leftovers) <= 0.01

    def test_achieves_grid_objective(self):
        rng = np.random.default_rng(16)
        y = rng.standard_normal((12, 10)) + 2.0 * np.outer(np.ones(12), np.ones(10)) / np.sqrt(120)
        tau = 0.3
        fact = linalg.svd(y)
        objective = shrinkage.make_risk_objective(y, fact, Gaussian(tau), "sure")

        def value_at(lam):
            return objective(linalg.soft_threshold_function(lam))

        lam = shrinkage.soft_threshold_fit(y, Gaussian(tau), "sure", fact=fact)
        top = fact.singular_values[0]
        best_grid = min(value_at(l) for l in np.arange(0.0, top + 1e-9, 1e-3 * top))
        assert value_at(lam) <= best_grid + 1e-6


class TestOracles:
    def test_self_oracle(self):
        rng = np.random.default_rng(17)
        y = rng.standard_normal((6, 5))
        fact = linalg.svd(y)
        oracle = shrinkage.oracle_weights(y, fact)
        np.testing.assert_allclose(oracle.values, fact.singular_values, rtol=1e-10)
        assert all(w == pytest.approx(1.0, abs=1e-10) for w in oracle.plan.weights.values())

    def test_zero_signal(self):
        rng = np.random.default_rng(18)
        y = rng.standard_normal((6, 5))
        fact = linalg.svd(y)
        oracle = shrinkage.oracle_weights(np.zeros((6, 5)), fact)
        np.testing.assert_allclose(oracle.values, 0.0, atol=1e-12)
        lam = shrinkage.oracle_soft_threshold(np.zeros((6, 5)), y, fact=fact)
        assert lam >= 0.999 * fact.singular_values[0]

    def test_oracle_values_are_local_minimizers(self):
        rng = np.random.default_rng(19)
        u, _ = np.linalg.qr(rng.standard_normal((12, 3)))
        v, _ = np.linalg.qr(rng.standard_normal((10, 3)))
        x = (u * [4.0, 3.0, 2.0]) @ v.T
        y = x + 0.2 * rng.standard_normal((12, 10))
        fact = linalg.svd(y)
        oracle = shrinkage.oracle_weights(x, fact)
        base = float(np.sum((oracle.estimate(fact) - x) ** 2))
        for k in range(fact.rank_bound):
            for bump in (-1e-3, 1e-3):
                values = oracle.values.copy()
                values[k] += bump
                perturbed = float(np.sum((linalg.compose(fact, values) - x) ** 2))
                assert perturbed >= base


class TestMinimizeBounded:
    def test_quadratic(self):
        assert shrinkage.minimize_bounded(lambda t: (t - 0.3) ** 2, 0, 1) == pytest.approx(
            0.3, abs=1e-5
        )

    def test_boundary_minimum(self):
        assert shrinkage.minimize_bounded(lambda t: t, 0, 1) <= 1e-4
