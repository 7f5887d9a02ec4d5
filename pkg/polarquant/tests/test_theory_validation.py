import math
import unittest

import numpy as np

from polarquant import distribution, polar, theory_validation
from polarquant.codebook import expected_quant_error
from polarquant.errors import InvalidArgument
from polarquant.precondition.rotation import build_rotation
from polarquant.theory_validation import (
    check_angle_distribution,
    check_codebook_size_lemma,
    check_large_codebook_limit,
    check_separability,
    check_theorem1,
    check_variance_bound,
    constructive_codebook,
    minimal_codebook_size,
    theorem1_codebooks,
    theorem1_doubling_ratios,
    theorem1_error_bound,
    theorem1_level_sizes,
)


def brute_force_error(x, codebooks, rotation):
    """Relative squared error of one row, nearest centroid found by scanning every centroid"""
    rotated = rotation.apply(x.reshape(1, -1))
    radii, angles = polar.polar_rows(rotated, codebooks.num_levels)
    snapped = []
    for cb, level_angles in zip(codebooks.levels, angles):
        nearest = np.argmin(np.abs(level_angles[0][:, None] - cb.centroids[None, :]), axis=1)
        snapped.append(cb.centroids[nearest].reshape(1, -1))
    back = rotation.apply_inverse(polar.cartesian_rows(radii, snapped))[0]
    return float(np.sum((x - back) ** 2) / np.sum(x ** 2))


class TestTheorem1(unittest.TestCase):

    def test_level_sizes(self):
        self.assertEqual([16, 8, 12, 16, 20, 24], theorem1_level_sizes(4, 6, 1))
        self.assertEqual([128, 64, 96, 128, 160, 192], theorem1_level_sizes(4, 6, 8))
        self.assertEqual([100, 64, 96, 100], theorem1_level_sizes(4, 4, 8, max_size=100))

    def test_sample_counts(self):
        self.assertEqual(100000, theory_validation.theorem1_samples([16, 8]))
        self.assertEqual(204800, theory_validation.theorem1_samples([4096]))
        self.assertEqual(1000000, theory_validation.theorem1_samples([100000]))

    def test_error_bound(self):
        self.assertAlmostEqual(20.0, theorem1_error_bound([1.0, 1.0]))
        self.assertAlmostEqual(4.0 / 0.25 * 2.0, theorem1_error_bound([1.0, 0.8], alpha=0.25))
        with self.assertRaises(InvalidArgument):
            theorem1_error_bound([1.0], alpha=0.0)

    def test_trial_matches_brute_force(self):
        codebooks = theorem1_codebooks([8, 4, 6, 8], 0)
        rotation = build_rotation(16, 1)
        x = theory_validation.gaussian_rows(5, 16, 2)
        errors = theory_validation.run_theorem1_trial(x, codebooks, rotation)
        for row, error in zip(x, errors):
            self.assertAlmostEqual(brute_force_error(row, codebooks, rotation), error, places=10)

    def test_error_shrinks_with_scale(self):
        reports = check_theorem1(d=16, k0=2, trials=200, seed=3, scales=(1, 2))
        self.assertEqual(2, len(reports))
        self.assertEqual([8, 4, 6, 8], reports[0].level_sizes)
        self.assertEqual([16, 8, 12, 16], reports[1].level_sizes)
        self.assertLess(reports[1].mean_rel_sq_error, reports[0].mean_rel_sq_error)
        for report in reports:
            self.assertLessEqual(report.mean_rel_sq_error, report.error_bound)
            self.assertEqual(4, len(report.expected_level_errors))
        ratios = theorem1_doubling_ratios(reports)
        self.assertEqual(1, len(ratios))
        self.assertGreater(ratios[0], 2.0)

    def test_rotation_barely_matters_on_gaussian_data(self):
        rotated = check_theorem1(d=16, k0=2, trials=400, seed=4, scales=(1,))[0]
        plain = check_theorem1(d=16, k0=2, trials=400, seed=4, scales=(1,), precondition=False)[0]
        self.assertLess(abs(rotated.mean_rel_sq_error / plain.mean_rel_sq_error - 1.0), 0.25)

    def test_large_codebook_limit(self):
        report = check_large_codebook_limit(d=4, k=256, trials=100, seed=5)
        self.assertEqual([256, 256], report.level_sizes)
        self.assertLessEqual(report.mean_rel_sq_error, 1e-3)
        self.assertIsNone(report.scale)

    def test_invalid(self):
        with self.assertRaises(InvalidArgument):
            check_theorem1(d=12)
        with self.assertRaises(InvalidArgument):
            check_theorem1(d=16, k0=1)
        with self.assertRaises(InvalidArgument):
            check_theorem1(d=16, trials=0)


class TestVarianceBound(unittest.TestCase):

    def test_products(self):
        report = check_variance_bound(levels=(2, 3, 4, 5), samples=200000, seed=0)
        self.assertTrue(report.passed)
        analytic = [v * (2 ** (level - 1) - 1) for level, v in zip(report.levels, report.analytic_variances)]
        for measured, expected in zip(report.products, analytic):
            self.assertAlmostEqual(measured / expected, 1.0, delta=0.03)
        self.assertAlmostEqual(report.products[0], 0.117, delta=0.005)
        self.assertEqual(3, len(report.step_ratios))

    def test_invalid_levels(self):
        with self.assertRaises(InvalidArgument):
            check_variance_bound(levels=(1, 2))
        with self.assertRaises(InvalidArgument):
            check_variance_bound(levels=())


class TestCodebookLemma(unittest.TestCase):

    def test_constructive_codebook(self):
        variance = distribution.angle_mean_var(3)[1]
        for eps in [0.1, 0.03]:
            cb = constructive_codebook(3, eps)
            self.assertLessEqual(expected_quant_error(cb), eps * variance)
        self.assertLess(constructive_codebook(3, 0.1).size, constructive_codebook(3, 0.01).size)
        with self.assertRaises(InvalidArgument):
            constructive_codebook(3, 0.0)

    def test_loose_target_needs_one_centroid(self):
        samples = distribution.sample_angles(3, 20000, 0)
        k, variance = minimal_codebook_size(samples, 3, 1.0, 0, restarts=1)
        self.assertEqual(1, k)
        self.assertAlmostEqual(variance, distribution.angle_mean_var(3)[1], delta=0.002)

    def test_unit_epsilon(self):
        report = check_codebook_size_lemma(level=3, epsilons=(1.0,), samples=20000, restarts=1)
        self.assertEqual([1], report.sizes)
        self.assertAlmostEqual(report.sigma, math.sqrt(report.var_1))

    def test_scaled_sizes_stay_bounded(self):
        report = check_codebook_size_lemma(level=3, epsilons=(0.1, 0.03), samples=20000, restarts=2, seed=1)
        self.assertLess(report.sizes[0], report.sizes[1])
        for eps, variance in zip(report.epsilons, report.variances):
            self.assertLessEqual(variance, eps * report.var_1)
        self.assertTrue(report.passed)
        self.assertEqual(2, len(report.constructive_sizes))
        self.assertGreater(math.log(1.0 / report.sigma), 0.0)

    def test_invalid(self):
        with self.assertRaises(InvalidArgument):
            check_codebook_size_lemma(level=1)
        with self.assertRaises(InvalidArgument):
            check_codebook_size_lemma(epsilons=(0.0,))
        with self.assertRaises(InvalidArgument):
            check_codebook_size_lemma(epsilons=(1.5,))


class TestSeparability(unittest.TestCase):

    def test_independent_angles(self):
        report = check_separability(d=8, samples=20000, seed=0)
        self.assertLess(report.max_abs_angle_corr, 0.05)
        self.assertLess(report.max_abs_radius_corr, 0.05)
        self.assertLess(report.max_ks_statistic, 0.03)
        self.assertGreater(report.ks_critical_value, 0.0)
        # the control duplicates a pair, so two level 1 angles coincide
        self.assertGreater(report.control_max_abs_corr, 0.99)

    def test_too_small(self):
        with self.assertRaises(InvalidArgument):
            check_separability(d=2)


class TestAngleDistribution(unittest.TestCase):

    def test_fit(self):
        report = check_angle_distribution(d=16, samples=20000, levels=4, seed=0, bins=32)
        self.assertEqual([1, 2, 3, 4], report.levels)
        for p_value in report.p_values:
            self.assertGreater(p_value, 1e-4)
        self.assertIsNone(report.means[0])
        for mean, tolerance in zip(report.means[1:], report.mean_tolerances[1:]):
            self.assertLess(abs(mean - math.pi / 4), 5 * tolerance)

    def test_bad_levels(self):
        with self.assertRaises(InvalidArgument):
            check_angle_distribution(d=16, levels=5)


class TestRunSuite(unittest.TestCase):

    def test_unknown_suite(self):
        with self.assertRaises(InvalidArgument):
            theory_validation.run_suite('everything')
