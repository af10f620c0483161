import numpy as np
from django.test import SimpleTestCase

from common.exceptions import DivergenceError
from ..hessian import build_hessian_bank
from ..kmeans import lloyd, residual_init, squared_distances
from ..models import ClusterState, GroupLayout, HessianBank, OaemConfig
from ..oaem import OaemRefiner, cosine_lr, e_step, em_loss, m_step_gradient, oaem_refine


def single_block_bank(H):
    return HessianBank(blocks=np.asarray(H, dtype=np.float64)[None], lam=0.0)


def random_problem(rng, n_rows=None, g=None, K=None):
    g = g or int(rng.integers(1, 5))
    n_blocks = int(rng.integers(1, 4))
    d_out = n_rows or int(rng.integers(2, 8))
    layout = GroupLayout(d_out, n_blocks * g, g)
    bank = build_hessian_bank(rng.standard_normal((3 * layout.d_in, layout.d_in)), g)
    targets = rng.standard_normal((layout.n_groups, g))
    K = K or int(rng.integers(1, 6))
    centroids = rng.standard_normal((K, g))
    return targets, bank, layout, centroids


class EStepTestCase(SimpleTestCase):
    def test_target_on_centroid(self):
        layout = GroupLayout(1, 2, 2)
        bank = single_block_bank(np.eye(2))
        centroids = np.array([[3.0, 1.0], [0.5, 0.5], [-1.0, 2.0]])
        self.assertEqual(e_step([[0.5, 0.5]], bank, layout, centroids).tolist(), [1])

    def test_metric_flips_nearest_centroid(self):
        layout = GroupLayout(1, 2, 2)
        centroids = np.array([[2.0, 0.0], [0.0, 1.0]])
        self.assertEqual(e_step([[0.0, 0.0]], single_block_bank(np.eye(2)), layout, centroids).tolist(), [1])
        flipped = e_step([[0.0, 0.0]], single_block_bank(np.diag([0.1, 10.0])), layout, centroids)
        self.assertEqual(flipped.tolist(), [0])

    def test_identity_metric_is_euclidean(self):
        rng = np.random.default_rng(12)
        for _ in range(1000):
            g = int(rng.integers(1, 5))
            layout = GroupLayout(int(rng.integers(1, 6)), g, g)
            targets = rng.standard_normal((layout.n_groups, g))
            centroids = rng.standard_normal((int(rng.integers(1, 8)), g))
            expected = np.argmin(squared_distances(targets, centroids), axis=1)
            assign = e_step(targets, HessianBank.identity(1, g), layout, centroids)
            self.assertEqual(assign.tolist(), expected.tolist())

    def test_ties_go_to_smallest_index(self):
        layout = GroupLayout(1, 1, 1)
        centroids = np.array([[1.0], [-1.0], [1.0]])
        self.assertEqual(e_step([[0.0]], single_block_bank([[1.0]]), layout, centroids).tolist(), [0])

    def test_reassignment_never_increases_loss(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            targets, bank, layout, centroids = random_problem(rng)
            assign = rng.integers(0, centroids.shape[0], size=layout.n_groups)
            before = em_loss(targets, bank, layout, centroids, assign)
            after = em_loss(targets, bank, layout, centroids, e_step(targets, bank, layout, centroids))
            self.assertLessEqual(after, before + 1e-12 * abs(before))

    def test_same_assignment_for_any_thread_count(self):
        targets, bank, layout, centroids = random_problem(np.random.default_rng(14), n_rows=64, g=2, K=5)
        self.assertEqual(
            e_step(targets, bank, layout, centroids, threads=1).tolist(),
            e_step(targets, bank, layout, centroids, threads=4).tolist(),
        )


class EmLossTestCase(SimpleTestCase):
    def test_perfect_assignment(self):
        layout = GroupLayout(3, 2, 2)
        centroids = np.array([[1.0, 2.0], [3.0, 4.0]])
        targets = centroids[[0, 1, 1]]
        bank = single_block_bank([[2.0, 0.5], [0.5, 1.0]])
        self.assertEqual(em_loss(targets, bank, layout, centroids, [0, 1, 1]), 0.0)

    def test_identity_metric_is_inertia_per_group(self):
        rng = np.random.default_rng(15)
        points = rng.standard_normal((20, 2))
        state = lloyd(points, points[:3].copy())
        layout = GroupLayout(20, 2, 2)
        loss = em_loss(points, HessianBank.identity(1, 2), layout, state.centroids, state.assign)
        self.assertAlmostEqual(loss, state.inertia / 20, delta=1e-12 * state.inertia)

    def test_matches_naive_summation(self):
        rng = np.random.default_rng(16)
        targets, bank, layout, centroids = random_problem(rng, g=3, K=4)
        assign = rng.integers(0, 4, size=layout.n_groups)
        expected = 0.0
        for index, target in enumerate(targets):
            error = target - centroids[assign[index]]
            expected += float(error @ bank.blocks[layout.block_of(index)] @ error)
        expected /= layout.n_groups
        self.assertAlmostEqual(em_loss(targets, bank, layout, centroids, assign), expected, delta=1e-9 * expected)


class MStepGradientTestCase(SimpleTestCase):
    def test_zero_errors_give_zero_gradient(self):
        layout = GroupLayout(2, 2, 2)
        centroids = np.array([[1.0, 1.0], [0.0, -1.0]])
        gradient = m_step_gradient(centroids.copy(), single_block_bank(np.eye(2)), layout, centroids, [0, 1])
        self.assertTrue(np.all(gradient == 0.0))

    def test_single_group_identity_metric(self):
        layout = GroupLayout(1, 3, 3)
        target = np.array([[1.0, -2.0, 0.5]])
        centroid = np.array([[0.25, 0.5, -1.0]])
        gradient = m_step_gradient(target, HessianBank.identity(1, 3), layout, centroid, [0])
        self.assertTrue(np.allclose(gradient, -2.0 * (target - centroid), rtol=0, atol=1e-15))

    def test_centroid_without_groups_gets_zero_gradient(self):
        rng = np.random.default_rng(17)
        targets, bank, layout, centroids = random_problem(rng, K=3)
        gradient = m_step_gradient(targets, bank, layout, centroids, np.zeros(layout.n_groups, dtype=int))
        self.assertTrue(np.all(gradient[1:] == 0.0))

    def test_matches_central_differences(self):
        rng = np.random.default_rng(18)
        h = 1e-4
        for _ in range(100):
            targets, bank, layout, centroids = random_problem(rng)
            assign = rng.integers(0, centroids.shape[0], size=layout.n_groups)
            analytic = m_step_gradient(targets, bank, layout, centroids, assign)
            numeric = np.zeros_like(centroids)
            for index in np.ndindex(*centroids.shape):
                plus = centroids.copy()
                minus = centroids.copy()
                plus[index] += h
                minus[index] -= h
                numeric[index] = (
                    em_loss(targets, bank, layout, plus, assign) - em_loss(targets, bank, layout, minus, assign)
                ) / (2 * h)
            scale = max(np.linalg.norm(analytic), 1e-8)
            self.assertLess(np.linalg.norm(numeric - analytic) / scale, 1e-4)


class CosineScheduleTestCase(SimpleTestCase):
    def test_endpoints(self):
        self.assertAlmostEqual(cosine_lr(0, 100, 1e-4, 0.1), 1e-4, delta=1e-9 * 1e-4)
        self.assertAlmostEqual(cosine_lr(99, 100, 1e-4, 0.1), 1e-5, delta=1e-9 * 1e-5)

    def test_single_step_uses_base_rate(self):
        self.assertEqual(cosine_lr(0, 1, 3e-4, 0.1), 3e-4)

    def test_decreasing(self):
        rates = [cosine_lr(step, 50, 1.0, 0.1) for step in range(50)]
        self.assertTrue(all(a >= b for a, b in zip(rates, rates[1:])))


class OaemRefineTestCase(SimpleTestCase):
    def line_problem(self):
        targets = np.array([[0.0], [1.0], [10.0], [11.0]])
        return targets, HessianBank.identity(1, 1), GroupLayout(4, 1, 1)

    def test_optimal_centroids_do_not_move(self):
        layout = GroupLayout(4, 2, 2)
        centroids = np.array([[1.0, 0.0], [0.0, 3.0]])
        targets = centroids[[0, 1, 1, 0]]
        bank = single_block_bank([[1.0, 0.2], [0.2, 2.0]])
        state = ClusterState(centroids=centroids.copy(), assign=np.array([0, 1, 1, 0]), inertia=0.0)
        refined = oaem_refine(targets, bank, layout, state, OaemConfig(rounds=2, steps_per_round=10))
        self.assertTrue(np.array_equal(refined.centroids, centroids))
        self.assertEqual(refined.assign.tolist(), [0, 1, 1, 0])
        self.assertEqual(refined.warnings, [])

    def test_poor_start_improves(self):
        targets, bank, layout = self.line_problem()
        centroids = np.array([[5.0], [6.0]])
        assign = e_step(targets, bank, layout, centroids)
        initial = em_loss(targets, bank, layout, centroids, assign)
        state = ClusterState(centroids=centroids, assign=assign, inertia=initial * 4)
        refined = oaem_refine(targets, bank, layout, state)
        final = em_loss(targets, bank, layout, refined.centroids, refined.assign)
        self.assertLess(final, initial)
        self.assertGreaterEqual(final, 0.25)
        self.assertEqual(refined.history[0], initial)
        self.assertEqual(len(refined.history), 4)

    def test_global_schedule_scope(self):
        targets, bank, layout = self.line_problem()
        centroids = np.array([[5.0], [6.0]])
        assign = e_step(targets, bank, layout, centroids)
        state = ClusterState(centroids=centroids, assign=assign, inertia=0.0)
        cfg = OaemConfig(rounds=2, steps_per_round=20, lr=0.1, schedule_scope='global')
        refined = oaem_refine(targets, bank, layout, state, cfg)
        self.assertLess(refined.history[-1], refined.history[0])

    def test_dead_centroid_stays_put(self):
        targets, bank, layout = self.line_problem()
        centroids = np.array([[5.0], [6.0], [500.0]])
        assign = e_step(targets, bank, layout, centroids)
        state = ClusterState(centroids=centroids, assign=assign, inertia=0.0)
        refined = oaem_refine(targets, bank, layout, state, OaemConfig(rounds=1, steps_per_round=5, lr=0.1))
        self.assertEqual(refined.centroids[2, 0], 500.0)

    def test_non_finite_loss_reports_round_and_step(self):
        layout = GroupLayout(1, 1, 1)
        bank = single_block_bank([[1e308]])
        state = ClusterState(centroids=np.array([[0.0]]), assign=np.array([0]), inertia=0.0)
        with np.errstate(over='ignore', invalid='ignore'):
            with self.assertRaises(DivergenceError) as caught:
                oaem_refine([[10.0]], bank, layout, state)
        self.assertEqual(caught.exception.where, "round 0, step 0")

    def test_refiner_plugs_into_residual_init(self):
        rng = np.random.default_rng(19)
        layout = GroupLayout(16, 4, 2)
        groups = rng.standard_normal((layout.n_groups, 2))
        bank = build_hessian_bank(rng.standard_normal((20, 4)), 2)
        refiner = OaemRefiner(bank, layout, OaemConfig(rounds=1, steps_per_round=5))
        codebooks, codes = residual_init(groups, 2, 4, 7, refine=refiner)
        self.assertEqual(codebooks.entries.shape, (2, 4, 2))
        self.assertEqual(codes.codes.shape, (layout.n_groups, 2))
