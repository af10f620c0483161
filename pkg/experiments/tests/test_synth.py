import numpy as np
from django.test import SimpleTestCase

from common.exceptions import DimensionError, DomainError
from ..models import ActivationSpec, WeightSpec
from ..synth import activation_stds, gen_activations, gen_weights, outlier_groups, shifted_dimensions


class GenWeightsTestCase(SimpleTestCase):
    def test_same_seed_is_bit_identical(self):
        spec = WeightSpec(d_out=16, d_in=32, g=4, outlier_fraction=0.1, outlier_scale=5.0, seed=3)
        self.assertEqual(gen_weights(spec), gen_weights(spec))

    def test_thread_count_does_not_matter(self):
        spec = WeightSpec(d_out=33, d_in=16, g=4, outlier_fraction=0.2, outlier_scale=3.0, seed=9)
        self.assertEqual(gen_weights(spec, threads=1), gen_weights(spec, threads=8))

    def test_different_seeds_differ(self):
        first = gen_weights(WeightSpec(d_out=4, d_in=8, g=4, seed=1))
        second = gen_weights(WeightSpec(d_out=4, d_in=8, g=4, seed=2))
        self.assertNotEqual(first, second)

    def test_pure_gaussian_std(self):
        W = gen_weights(WeightSpec(d_out=250, d_in=400, g=4, base_std=2.0, seed=0))
        self.assertAlmostEqual(float(np.std(W.data.astype(np.float64))), 2.0, delta=0.1)
        self.assertAlmostEqual(float(np.mean(W.data.astype(np.float64))), 0.0, delta=0.05)

    def test_unit_outlier_scale_matches_no_outliers(self):
        plain = WeightSpec(d_out=8, d_in=16, g=4, seed=4)
        scaled = WeightSpec(d_out=8, d_in=16, g=4, outlier_fraction=0.25, outlier_scale=1.0, seed=4)
        self.assertEqual(gen_weights(plain), gen_weights(scaled))

    def test_outliers_scale_whole_groups(self):
        spec = WeightSpec(d_out=6, d_in=8, g=4, outlier_fraction=0.25, outlier_scale=10.0, seed=5)
        plain = gen_weights(WeightSpec(d_out=6, d_in=8, g=4, seed=5)).data.reshape(-1, 4)
        outliers = gen_weights(spec).data.reshape(-1, 4)
        chosen = outlier_groups(spec)
        self.assertEqual(len(chosen), 3)
        for group in range(plain.shape[0]):
            factor = 10.0 if group in chosen else 1.0
            np.testing.assert_allclose(outliers[group], plain[group] * factor, rtol=1e-6)

    def test_outlier_norm_ratio(self):
        spec = WeightSpec(d_out=1000, d_in=64, g=8, outlier_fraction=0.05, outlier_scale=10.0, seed=6)
        norms = np.linalg.norm(gen_weights(spec).data.astype(np.float64).reshape(-1, 8), axis=1)
        mask = np.zeros(len(norms), dtype=bool)
        mask[outlier_groups(spec)] = True
        ratio = np.median(norms[mask]) / np.median(norms[~mask])
        self.assertAlmostEqual(ratio, 10.0, delta=1.0)

    def test_invalid_specs(self):
        with self.assertRaises(DimensionError):
            WeightSpec(d_out=4, d_in=10, g=4)
        with self.assertRaises(DomainError):
            WeightSpec(d_out=4, d_in=8, g=4, outlier_scale=0.5)
        with self.assertRaises(DomainError):
            WeightSpec(d_out=4, d_in=8, g=4, outlier_fraction=1.5)


class GenActivationsTestCase(SimpleTestCase):
    def test_same_seed_is_bit_identical(self):
        spec = ActivationSpec(n_rows=32, d_in=8, profile='decaying', seed=2)
        self.assertEqual(gen_activations(spec), gen_activations(spec))
        self.assertEqual(gen_activations(spec, threads=1), gen_activations(spec, threads=8))

    def test_constant_profile_second_moments(self):
        spec = ActivationSpec(n_rows=10000, d_in=6, base_std=1.5, seed=3)
        X = gen_activations(spec).data.astype(np.float64)
        diagonal = np.diag(X.T @ X) / X.shape[0]
        np.testing.assert_allclose(diagonal, np.full(6, 2.25), rtol=0.1)

    def test_decaying_profile_decreases(self):
        spec = ActivationSpec(n_rows=10000, d_in=8, profile='decaying', decay=2.0, seed=4)
        self.assertTrue(np.all(np.diff(activation_stds(spec)) < 0))
        X = gen_activations(spec).data.astype(np.float64)
        diagonal = np.diag(X.T @ X) / X.shape[0]
        self.assertTrue(np.all(np.diff(diagonal) < 0))

    def test_unit_shift_is_identical(self):
        spec = ActivationSpec(n_rows=16, d_in=8, shift_scale=1.0, seed=5)
        self.assertEqual(gen_activations(spec, shifted=True), gen_activations(spec))

    def test_shift_rescales_half_the_dimensions(self):
        spec = ActivationSpec(n_rows=16, d_in=10, shift_scale=4.0, seed=6)
        base = gen_activations(spec).data
        shifted = gen_activations(spec, shifted=True).data
        dims = shifted_dimensions(spec)
        self.assertEqual(len(dims), 5)
        rest = np.setdiff1d(np.arange(10), dims)
        np.testing.assert_array_equal(shifted[:, dims], 4.0 * base[:, dims])
        np.testing.assert_array_equal(shifted[:, rest], base[:, rest])

    def test_few_rows_warn(self):
        with self.assertLogs('experiments.synth', level='WARNING'):
            gen_activations(ActivationSpec(n_rows=4, d_in=8))

    def test_invalid_specs(self):
        with self.assertRaises(DomainError):
            ActivationSpec(n_rows=4, d_in=4, profile='linear')
        with self.assertRaises(DomainError):
            ActivationSpec(n_rows=4, d_in=4, base_std=0.0)
