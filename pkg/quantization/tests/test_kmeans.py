import numpy as np
from django.test import SimpleTestCase
from scipy.stats import chisquare

from common.exceptions import DomainError
from common.utils import derive_seed
from ..beam import exhaustive_assign
from ..codebooks import weight_error
from ..kmeans import kmeanspp_seed, lloyd, residual_init, squared_distances
from ..models import ClusterState
from .factories import TRAP_FIRST, TRAP_SECOND, trap_codebooks


class KmeansppSeedTestCase(SimpleTestCase):
    def test_single_centroid_is_a_data_point(self):
        points = np.random.default_rng(7).standard_normal((10, 3))
        centroids = kmeanspp_seed(points, 1, 11)
        self.assertEqual(centroids.shape, (1, 3))
        self.assertTrue(any(np.array_equal(centroids[0], point) for point in points))

    def test_identical_points_give_identical_centroids(self):
        points = np.full((5, 2), 3.0)
        centroids = kmeanspp_seed(points, 4, 0)
        self.assertTrue(np.all(centroids == 3.0))

    def test_surplus_centroids_duplicate_points(self):
        points = np.array([[0.0], [1.0]])
        centroids = kmeanspp_seed(points, 5, 3)
        self.assertEqual(centroids.shape, (5, 1))
        self.assertTrue(set(centroids[:, 0].tolist()) <= {0.0, 1.0})

    def test_same_seed_same_centroids(self):
        points = np.random.default_rng(8).standard_normal((50, 2))
        self.assertTrue(np.array_equal(kmeanspp_seed(points, 6, 42), kmeanspp_seed(points, 6, 42)))

    def test_empty_points(self):
        with self.assertRaises(DomainError):
            kmeanspp_seed(np.zeros((0, 2)), 2, 0)

    def test_zero_centroids(self):
        with self.assertRaises(DomainError):
            kmeanspp_seed(np.zeros((3, 2)), 0, 0)

    def test_second_centroid_follows_squared_distance_weighting(self):
        points = np.array([0.0, 1.0, 3.0])
        squared = (points[:, None] - points[None, :]) ** 2
        probabilities = (squared / squared.sum(axis=1, keepdims=True)) / 3.0

        counts = np.zeros((3, 3))
        trials = 10000
        for seed in range(trials):
            first, second = kmeanspp_seed(points, 2, seed)[:, 0]
            counts[int(np.flatnonzero(points == first)[0]), int(np.flatnonzero(points == second)[0])] += 1

        self.assertEqual(np.trace(counts), 0)
        possible = probabilities > 0
        _, p_value = chisquare(counts[possible], probabilities[possible] * trials)
        self.assertGreater(p_value, 1e-3)


class LloydTestCase(SimpleTestCase):
    def test_points_on_centroids_converge_at_once(self):
        points = np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]])
        state = lloyd(points, points.copy())
        self.assertEqual(state.iterations, 1)
        self.assertEqual(state.inertia, 0.0)
        self.assertEqual(state.assign.tolist(), [0, 1, 2])

    def test_two_clusters_on_a_line(self):
        state = lloyd(np.array([0.0, 1.0, 10.0, 11.0]), np.array([0.0, 1.0]))
        self.assertEqual(sorted(state.centroids[:, 0].tolist()), [0.5, 10.5])
        self.assertEqual(state.inertia, 1.0)

    def test_inertia_never_increases(self):
        rng = np.random.default_rng(9)
        for seed in range(100):
            points = rng.standard_normal((int(rng.integers(5, 40)), int(rng.integers(1, 4))))
            K = int(rng.integers(1, 6))
            state = lloyd(points, kmeanspp_seed(points, K, seed))
            for before, after in zip(state.history, state.history[1:]):
                self.assertLessEqual(after, before * (1 + 1e-12))

    def test_inertia_matches_assignment(self):
        rng = np.random.default_rng(10)
        points = rng.standard_normal((30, 2))
        state = lloyd(points, kmeanspp_seed(points, 4, 1))
        distances = squared_distances(points, state.centroids)
        recomputed = float(np.sum(distances[np.arange(30), state.assign]))
        self.assertAlmostEqual(state.inertia, recomputed, delta=1e-12 * max(recomputed, 1.0))
        self.assertTrue(np.all(state.assign < 4))

    def test_empty_cluster_is_reseeded_to_farthest_point(self):
        points = np.array([0.0, 1.0, 9.0])
        state = lloyd(points, np.array([0.0, 100.0]))
        self.assertEqual(sorted(state.centroids[:, 0].tolist()), [0.5, 9.0])


class ResidualInitTestCase(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(11)

    def test_single_codebook_is_lloyd(self):
        groups = self.rng.standard_normal((40, 2))
        codebooks, codes = residual_init(groups, 1, 5, 21)
        state = lloyd(groups, kmeanspp_seed(groups, 5, derive_seed(21, 'codebook', 0)))
        self.assertEqual(codebooks.entries[0].tobytes(), state.centroids.astype(np.float32).tobytes())
        self.assertEqual(codes.codes[:, 0].tolist(), state.assign.tolist())

    def test_representable_groups_leave_no_residual(self):
        distinct = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0]])
        groups = distinct[self.rng.integers(0, 4, size=60)]
        codebooks, codes = residual_init(groups, 2, 4, 5)
        self.assertLess(weight_error(groups, codebooks, codes), 1e-12)

    def test_weight_error_is_recomputable(self):
        groups = self.rng.standard_normal((50, 3))
        codebooks, codes = residual_init(groups, 3, 4, 8)
        expected = 0.0
        entries = codebooks.wide()
        for group, code in zip(groups, codes.codes):
            residual = group - sum(entries[m, code[m]] for m in range(3))
            expected += float(residual @ residual)
        self.assertAlmostEqual(weight_error(groups, codebooks, codes), expected, delta=1e-9 * expected)

    def test_same_seed_same_codebooks(self):
        groups = self.rng.standard_normal((30, 2))
        first = residual_init(groups, 2, 4, 99)
        second = residual_init(groups, 2, 4, 99)
        self.assertEqual(first[0].entries.tobytes(), second[0].entries.tobytes())
        self.assertEqual(first[1].codes.tobytes(), second[1].codes.tobytes())

    def test_sequential_fit_commits_prematurely(self):
        fixed = [np.array(TRAP_FIRST)[:, None], np.array(TRAP_SECOND)[:, None]]

        def pin(stage, targets, state):
            centroids = fixed[stage].astype(np.float32).astype(np.float64)
            assign = np.argmin(squared_distances(targets, centroids), axis=1)
            return ClusterState(centroids=centroids, assign=assign, inertia=0.0)

        codebooks, codes = residual_init(np.array([[1.0]]), 2, 2, 0, refine=pin)
        self.assertEqual(codes.codes.tolist(), [[0, 0]])
        self.assertAlmostEqual(weight_error([[1.0]], codebooks, codes), 0.01, delta=1e-6)
        self.assertEqual(exhaustive_assign([1.0], trap_codebooks()), (1, 1))

    def test_needs_a_codebook(self):
        with self.assertRaises(DomainError):
            residual_init(np.zeros((3, 1)), 0, 2, 0)
