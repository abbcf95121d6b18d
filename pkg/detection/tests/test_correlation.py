import math

import numpy as np
from django.test import SimpleTestCase, tag
from scipy.stats import ks_2samp

from detection.correlation import (
    CorrelationModel,
    Hypothesis,
    RHO_CEILING,
    Variant,
    check_index_set,
    check_rho,
    det_AS,
    expected_ZS,
    gaussian_quad_mgf,
    log_det_AS,
    mgf_matrix_spectrum,
    quad_form,
    quad_form_from_sums,
    quad_form_law,
    sample_alternative,
    sample_null,
    sample_observation,
    spectrum,
)
from detection.exceptions import ConfigurationError
from detection.streams import get_rng, split, trial_stream


class ValidationTests(SimpleTestCase):
    def test_rho_range(self):
        self.assertEqual(check_rho(0.0), 0.0)
        self.assertEqual(check_rho(0.5), 0.5)
        for bad in (1.0, -0.1, float("nan"), 1.5):
            with self.assertRaises(ConfigurationError):
                check_rho(bad)
        with self.assertRaises(ConfigurationError):
            check_rho(0.0, open_interval=True)

    def test_rho_close_to_one_is_clamped(self):
        self.assertEqual(check_rho(1.0 - 1e-15), RHO_CEILING)

    def test_index_set(self):
        np.testing.assert_array_equal(check_index_set([3, 1], 5), [3, 1])
        with self.assertRaises(ConfigurationError):
            check_index_set([0, 5], 5)
        with self.assertRaises(ConfigurationError):
            check_index_set([1, 1], 5)
        with self.assertRaises(ConfigurationError):
            check_index_set([1, 2], 5, k=3)

    def test_model_dimensions(self):
        with self.assertRaises(ConfigurationError):
            CorrelationModel(3, 4, 0.5)
        with self.assertRaises(ConfigurationError):
            CorrelationModel(0, 0, 0.5)
        self.assertIs(CorrelationModel(10, 3, 0.2).variant, Variant.EXACT)

    def test_general_floor_block(self):
        block = np.array([[1.0, 0.6, 0.5], [0.6, 1.0, 0.7], [0.5, 0.7, 1.0]])
        model = CorrelationModel.general_floor(8, 3, 0.5, block)
        self.assertIs(model.variant, Variant.GENERAL)
        with self.assertRaises(ConfigurationError):
            CorrelationModel.general_floor(8, 3, 0.55, block)
        with self.assertRaises(ConfigurationError):
            CorrelationModel.general_floor(8, 2, 0.5, np.array([[1.0, 0.5], [0.4, 1.0]]))
        # rank one, not positive definite
        with self.assertRaises(ConfigurationError):
            CorrelationModel.general_floor(8, 3, 0.5, np.ones((3, 3)))


class StreamTests(SimpleTestCase):
    def test_same_counters_same_stream(self):
        np.testing.assert_array_equal(split(7, 1, 2, 3).standard_normal(5), split(7, 1, 2, 3).standard_normal(5))

    def test_different_counters_differ(self):
        a = trial_stream(7, 0, 1, 0).standard_normal(5)
        b = trial_stream(7, 0, 1, 1).standard_normal(5)
        self.assertFalse(np.array_equal(a, b))

    def test_default_seed(self):
        np.testing.assert_array_equal(get_rng().standard_normal(3), get_rng(20120101).standard_normal(3))


class SamplingTests(SimpleTestCase):
    def test_null_is_deterministic(self):
        a = sample_null(50, get_rng(3))
        b = sample_null(50, get_rng(3))
        self.assertEqual(a.shape, (50,))
        np.testing.assert_array_equal(a, b)

    def test_alternative_covariance(self):
        model = CorrelationModel(6, 3, 0.6)
        S = np.array([0, 2, 5])
        rng = get_rng(11)
        draws = np.array([sample_alternative(model, S, rng) for _ in range(20000)])
        cov = np.cov(draws, rowvar=False)
        np.testing.assert_allclose(cov, model.embedded_covariance(S), atol=0.05)

    def test_general_floor_covariance(self):
        block = np.array([[1.0, 0.6, 0.5], [0.6, 1.0, 0.7], [0.5, 0.7, 1.0]])
        model = CorrelationModel.general_floor(4, 3, 0.5, block)
        S = np.array([1, 2, 3])
        rng = get_rng(12)
        draws = np.array([sample_alternative(model, S, rng) for _ in range(20000)])
        np.testing.assert_allclose(np.cov(draws, rowvar=False), model.embedded_covariance(S), atol=0.05)

    def test_observation_needs_set_under_alternative(self):
        model = CorrelationModel(5, 2, 0.3)
        with self.assertRaises(ConfigurationError):
            sample_observation(model, Hypothesis.ALTERNATIVE, get_rng(1))
        self.assertEqual(sample_observation(model, "null", get_rng(1)).shape, (5,))


class QuadFormTests(SimpleTestCase):
    def test_matches_dense_inverse(self):
        rng = get_rng(5)
        model = CorrelationModel(12, 5, 0.35)
        S = np.array([0, 3, 4, 7, 11])
        M = np.eye(12) - np.linalg.inv(model.embedded_covariance(S))
        for _ in range(20):
            X = rng.standard_normal(12)
            self.assertAlmostEqual(quad_form(X, S, 0.35), X @ M @ X, delta=1e-10 * max(1.0, abs(X @ M @ X)))

    def test_from_sums_is_vectorized(self):
        values = quad_form_from_sums(np.array([1.0, 2.0]), np.array([3.0, 4.0]), 3, 0.5)
        self.assertEqual(values.shape, (2,))

    def test_law_means_match_traces(self):
        for k, rho in ((10, 0.3), (10, 0.7), (4, 0.1)):
            model = CorrelationModel(k, k, rho)
            S = np.arange(k)
            A = model.embedded_covariance(S)
            M = np.eye(k) - np.linalg.inv(A)
            self.assertAlmostEqual(quad_form_law(k, rho, "null").mean, np.trace(M), places=10)
            self.assertAlmostEqual(quad_form_law(k, rho, "alternative").mean, np.trace(M @ A), places=10)
            # Var(X^T M X) = 2 tr((M A)^2) for X ~ N(0, A)
            self.assertAlmostEqual(quad_form_law(k, rho, "null").variance, 2 * np.trace(M @ M), places=8)
            self.assertAlmostEqual(
                quad_form_law(k, rho, "alternative").variance, 2 * np.trace(M @ A @ M @ A), places=8
            )

    def test_k_one_is_point_mass(self):
        law = quad_form_law(1, 0.5, "null")
        self.assertTrue(law.is_point_mass)
        np.testing.assert_array_equal(law.sample(4, get_rng(1)), np.zeros(4))

    @tag("slow")
    def test_law_matches_simulation(self):
        n, k, trials = 100, 10, 10_000
        S = np.arange(20, 20 + k)
        for rho in (0.3, 0.7):
            model = CorrelationModel(n, k, rho)
            for index, hypothesis in enumerate(Hypothesis):
                rng = split(99, int(rho * 10), index)
                empirical = np.array([
                    quad_form(sample_observation(model, hypothesis, rng, S), S, rho) for _ in range(trials)
                ])
                direct = quad_form_law(k, rho, hypothesis).sample(trials, split(98, int(rho * 10), index))
                self.assertGreater(ks_2samp(empirical, direct).pvalue, 0.001, (rho, hypothesis))


class DeterminantTests(SimpleTestCase):
    def test_det_matches_dense(self):
        for k in range(1, 9):
            for rho in np.arange(1, 10) / 10:
                dense = np.linalg.det(CorrelationModel(k, k, rho).covariance_block())
                self.assertLess(abs(det_AS(k, rho) - dense), 1e-10 * dense)

    def test_log_det_zero_rho(self):
        self.assertEqual(log_det_AS(5, 0.0), 0.0)

    def test_spectrum_matches_dense(self):
        model = CorrelationModel(7, 4, 0.45)
        dense = np.linalg.eigvalsh(model.embedded_covariance([0, 1, 2, 3]))
        np.testing.assert_allclose(np.sort(spectrum(7, 4, 0.45)), np.sort(dense), atol=1e-12)

    def test_mgf_infinite_past_one_half(self):
        self.assertEqual(gaussian_quad_mgf([0.1, 0.5]), math.inf)
        self.assertEqual(gaussian_quad_mgf([]), 1.0)
        # 1 - 1/(1 + rho (k - 1)) reaches 1/2 once rho (k - 1) >= 1
        self.assertEqual(gaussian_quad_mgf(mgf_matrix_spectrum(10, 10, 0.5)), math.inf)

    def test_mgf_matches_monte_carlo(self):
        lam = np.array([0.1, -0.3, 0.2])
        X = get_rng(21).standard_normal((100_000, 3))
        values = np.exp((X * X) @ lam)
        se = values.std() / math.sqrt(values.size)
        self.assertLess(abs(values.mean() - gaussian_quad_mgf(lam)), 4 * se)

    def test_expected_likelihood_ratio_factor(self):
        k, rho = 3, 0.1
        X = get_rng(22).standard_normal((100_000, k))
        z = np.exp(0.5 * quad_form_from_sums(X.sum(axis=1), (X * X).sum(axis=1), k, rho))
        se = z.std() / math.sqrt(z.size)
        self.assertAlmostEqual(expected_ZS(k, rho), math.sqrt(det_AS(k, rho)), places=12)
        self.assertLess(abs(z.mean() - expected_ZS(k, rho)), 4 * se)
