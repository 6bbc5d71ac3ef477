import math
import unittest

import numpy as np

from dsboot.errors import BandwidthError, ConfigError
from dsboot.model.density import (
    BANDWIDTH_FLOOR,
    KdeConfig,
    kde_eval,
    relevance_weights,
    scott_bandwidth,
    silverman_bandwidth_1d,
    weights_at,
)


def kde_oracle(y, h, t):
    total = 0.0
    for yi in y:
        u = (t - yi) / h
        total += math.exp(-0.5 * u * u) / math.sqrt(2 * math.pi)
    return total / (len(y) * h)


class TestKde(unittest.TestCase):
    def test_matches_double_loop(self):
        rng = np.random.default_rng(3)
        y = rng.normal(size=40)
        points = rng.normal(size=15) * 2
        got = kde_eval(y, 0.37, points)
        expected = [kde_oracle(y, 0.37, t) for t in points]
        np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)

    def test_single_point_is_gaussian_pdf(self):
        got = kde_eval([0.0], 1.0, [0.0, 1.0])
        np.testing.assert_allclose(got, [1 / math.sqrt(2 * math.pi), math.exp(-0.5) / math.sqrt(2 * math.pi)])

    def test_two_point_example(self):
        got = float(kde_eval([0.0, 1.0], 0.5, [0.0])[0])
        self.assertAlmostEqual(got, kde_oracle([0.0, 1.0], 0.5, 0.0), places=14)
        self.assertAlmostEqual(got, 0.4529, delta=1e-4)

    def test_symmetric_sample_gives_even_density(self):
        y = np.array([-2.0, -0.5, 0.5, 2.0, -1.25, 1.25])
        t = np.linspace(0.1, 3.0, 12)
        np.testing.assert_allclose(kde_eval(y, 0.4, t), kde_eval(y, 0.4, -t), rtol=1e-14)

    def test_rejects_bad_bandwidth(self):
        with self.assertRaises(BandwidthError):
            kde_eval([0.0, 1.0], 0.0, [0.0])


class TestSilverman(unittest.TestCase):
    def test_formula(self):
        y = np.array([0.0, 1.0, 2.0, 3.0, 10.0])
        sd = np.std(y, ddof=1)
        q75, q25 = np.percentile(y, [75, 25])
        expected = 0.9 * min(sd, (q75 - q25) / 1.34) * 5 ** (-0.2)
        self.assertAlmostEqual(silverman_bandwidth_1d(y), expected, places=14)

    def test_standard_normal_sample(self):
        y = np.random.default_rng(8).standard_normal(1000)
        self.assertAlmostEqual(silverman_bandwidth_1d(y), 0.2259, delta=0.025)

    def test_scale_equivariance(self):
        y = np.random.default_rng(9).normal(size=200)
        self.assertAlmostEqual(silverman_bandwidth_1d(3.0 * y), 3.0 * silverman_bandwidth_1d(y), places=12)

    def test_zero_iqr_falls_back_to_sd(self):
        y = np.array([1.0] * 9 + [5.0])
        expected = 0.9 * np.std(y, ddof=1) * 10 ** (-0.2)
        self.assertAlmostEqual(silverman_bandwidth_1d(y), expected, places=14)

    def test_constant_sample(self):
        with self.assertRaises(BandwidthError):
            silverman_bandwidth_1d(np.ones(5))

    def test_explicit_bandwidth_wins(self):
        self.assertEqual(KdeConfig(bandwidth=0.25).resolve(np.ones(5)), 0.25)
        with self.assertRaises(ConfigError):
            KdeConfig(bandwidth=-1.0)


class TestRelevanceWeights(unittest.TestCase):
    def test_alpha_zero_is_uniform(self):
        y = np.random.default_rng(0).normal(size=50)
        w = relevance_weights(y, 0.0)
        np.testing.assert_allclose(w.raw, np.ones(50))
        np.testing.assert_allclose(w.normalized, np.full(50, 1 / 50))

    def test_rare_values_get_larger_weights(self):
        y = np.concatenate([np.random.default_rng(1).normal(size=200), [6.0]])
        w = relevance_weights(y, 1.0)
        self.assertEqual(int(np.argmax(w.raw)), 200)
        self.assertAlmostEqual(float(w.normalized.sum()), 1.0, places=12)

    def test_strictly_decreasing_in_density(self):
        y = np.random.default_rng(10).normal(size=150)
        for alpha in (0.5, 1.0, 2.0):
            w = relevance_weights(y, alpha)
            density = kde_eval(y, w.bandwidth, y)
            order = np.argsort(density)
            rising = np.diff(density[order]) > 0
            self.assertTrue(np.all(np.diff(w.raw[order])[rising] < 0), alpha)

    def test_isolated_value_outweighs_cluster(self):
        w = relevance_weights(np.array([0.0, 0.0, 0.0, 0.0, 10.0]), 1.0)
        self.assertTrue(np.all(w.normalized[4] > w.normalized[:4]))

    def test_symmetric_pairs_share_weights(self):
        y = np.array([-3.0, -1.0, -0.2, 0.2, 1.0, 3.0])
        w = relevance_weights(y, 1.0)
        np.testing.assert_allclose(w.raw, w.raw[::-1], rtol=1e-12)

    def test_raw_is_inverse_density_power(self):
        y = np.array([0.0, 0.5, 1.0, 3.0])
        w = relevance_weights(y, 2.0, KdeConfig(bandwidth=0.5))
        density = np.array([kde_oracle(y, 0.5, t) for t in y])
        np.testing.assert_allclose(w.raw, density ** -2.0, rtol=1e-12)
        self.assertEqual(w.bandwidth, 0.5)

    def test_weights_at_far_point_is_finite(self):
        y = np.array([0.0, 0.5, 1.0, 3.0])
        w = relevance_weights(y, 1.0, KdeConfig(bandwidth=0.5))
        far = weights_at(y, w, [1e6])
        self.assertTrue(np.all(np.isfinite(far)))

    def test_negative_alpha_rejected(self):
        with self.assertRaises(ConfigError):
            relevance_weights(np.array([0.0, 1.0, 2.0]), -1.0)


class TestScottBandwidth(unittest.TestCase):
    def test_per_dimension_rule(self):
        mu = np.random.default_rng(2).normal(size=(30, 3)) * [1.0, 2.0, 0.5]
        bw = scott_bandwidth(mu, hmult=2.0)
        expected = np.std(mu, axis=0, ddof=1) * 30 ** (-1 / 7)
        np.testing.assert_allclose(bw.per_dim, expected)
        np.testing.assert_allclose(bw.effective, 2.0 * expected)
        self.assertEqual(bw.floored, ())

    def test_constant_dimension_is_floored(self):
        mu = np.column_stack([np.arange(10.0), np.ones(10)])
        with self.assertLogs("dsboot.model.density", level="WARNING"):
            bw = scott_bandwidth(mu)
        self.assertEqual(bw.floored, (1,))
        self.assertEqual(bw.per_dim[1], BANDWIDTH_FLOOR)

    def test_scale_equivariance(self):
        mu = np.random.default_rng(4).normal(size=(25, 3))
        base = scott_bandwidth(mu).per_dim
        doubled = mu * [1.0, 2.0, 1.0]
        np.testing.assert_allclose(scott_bandwidth(doubled).per_dim, base * [1.0, 2.0, 1.0], rtol=1e-12)

    def test_scaling_keeps_constant_dimension_floored(self):
        mu = np.column_stack([np.arange(12.0), np.full(12, 4.0), np.arange(12.0) ** 0.5])
        with self.assertLogs("dsboot.model.density", level="WARNING"):
            base = scott_bandwidth(mu)
        with self.assertLogs("dsboot.model.density", level="WARNING"):
            scaled = scott_bandwidth(mu * 3.0)
        self.assertEqual(scaled.floored, (1,))
        self.assertEqual(scaled.per_dim[1], BANDWIDTH_FLOOR)
        np.testing.assert_allclose(scaled.per_dim[[0, 2]], 3.0 * base.per_dim[[0, 2]], rtol=1e-12)


if __name__ == "__main__":
    unittest.main()
