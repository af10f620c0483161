import numpy as np
from django.test import SimpleTestCase

from common.exceptions import DimensionError, DivergenceError, UnsupportedError
from tensorio.models import DenseMatrix, QuantizedArtifact
from ..codebooks import build_artifact
from ..finetune import pv_finetune
from ..models import CodeMatrix, LayerProblem, PvConfig
from .factories import dyadic_layer, trap_codebooks, trap_layer


class PvFinetuneTestCase(SimpleTestCase):
    def setUp(self):
        self.rng = np.random.default_rng(22)

    def trap_start(self):
        problem = trap_layer(3, targets=[1.0, 0.9, 0.4])
        codes = CodeMatrix([[0, 0], [0, 0], [1, 0]])
        artifact = build_artifact(trap_codebooks(), codes, 3, 1)
        return problem, artifact, np.ones((8, 1))

    def random_start(self, seed):
        rng = np.random.default_rng(seed)
        W = DenseMatrix(rng.standard_normal((4, 6)))
        problem = LayerProblem(W=W, X=DenseMatrix(rng.standard_normal((12, 6))), g=3)
        codebooks = rng.standard_normal((2, 4, 3)).astype(np.float32)
        artifact = QuantizedArtifact(
            d_out=4, d_in=6, g=3, codebooks=codebooks, codes=rng.integers(0, 4, size=(8, 2))
        )
        return problem, artifact, rng.standard_normal((10, 6))

    def test_exact_artifact_keeps_zero_loss(self):
        problem, codebooks, codes = dyadic_layer(self.rng, 3, 4, 2, 2, 4)
        artifact = build_artifact(codebooks, codes, 3, 4)
        result = pv_finetune(artifact, problem, problem.X, PvConfig(outer_steps=20, reassign_every=5))
        self.assertEqual(len(result.trace), 21)
        self.assertTrue(all(loss == 0.0 for _, loss in result.trace))
        self.assertEqual(result.loss, 0.0)

    def test_reassignment_escapes_the_trap(self):
        problem, artifact, holdout = self.trap_start()
        codebook_only = pv_finetune(artifact, problem, holdout, PvConfig(outer_steps=50, reassign_every=None, beam_width=2))
        reassigning = pv_finetune(artifact, problem, holdout, PvConfig(outer_steps=50, reassign_every=10, beam_width=2))
        self.assertAlmostEqual(codebook_only.trace[0][1], 0.01, delta=1e-6)
        self.assertGreaterEqual(codebook_only.loss, 0.005 - 1e-7)
        self.assertLess(reassigning.loss, codebook_only.loss)
        self.assertEqual(reassigning.codes.codes[0].tolist(), [1, 1])

    def test_zero_rate_without_reassignment_leaves_artifact_unchanged(self):
        problem, artifact, holdout = self.random_start(23)
        result = pv_finetune(artifact, problem, holdout, PvConfig(outer_steps=10, reassign_every=None, lr=0.0))
        self.assertEqual(result.artifact, artifact)
        self.assertEqual(len({loss for _, loss in result.trace}), 1)

    def test_reassignment_passes_never_increase_loss(self):
        for seed in range(10):
            problem, artifact, holdout = self.random_start(seed)
            result = pv_finetune(artifact, problem, holdout, PvConfig(outer_steps=6, reassign_every=1, lr=0.0, beam_width=4))
            losses = [loss for _, loss in result.trace]
            self.assertTrue(all(after <= before for before, after in zip(losses, losses[1:])))

    def test_final_loss_never_exceeds_initial(self):
        for seed in range(5):
            problem, artifact, holdout = self.random_start(100 + seed)
            result = pv_finetune(artifact, problem, holdout, PvConfig(outer_steps=30, reassign_every=10, lr=1e-2))
            self.assertLessEqual(result.loss, result.trace[0][1])
            self.assertEqual(result.loss, min(loss for _, loss in result.trace))

    def test_repeated_runs_are_identical(self):
        problem, artifact, holdout = self.random_start(24)
        cfg = PvConfig(outer_steps=20, reassign_every=5, lr=1e-2)
        first = pv_finetune(artifact, problem, holdout, cfg, threads=1)
        second = pv_finetune(artifact, problem, holdout, cfg, threads=4)
        self.assertEqual(first.trace, second.trace)
        self.assertEqual(first.artifact, second.artifact)

    def test_divergence_names_step(self):
        problem, artifact, holdout = self.random_start(25)
        with np.errstate(over='ignore', invalid='ignore'):
            with self.assertRaises(DivergenceError) as caught:
                pv_finetune(artifact, problem, holdout, PvConfig(outer_steps=5, lr=1e300))
        self.assertEqual(caught.exception.where, "step 1")

    def test_artifact_must_match_layer(self):
        problem, artifact, holdout = self.random_start(26)
        other = QuantizedArtifact(d_out=2, d_in=6, g=3, codebooks=artifact.codebooks, codes=artifact.codes[:4])
        with self.assertRaises(DimensionError):
            pv_finetune(other, problem, holdout)
        with self.assertRaises(DimensionError):
            pv_finetune(artifact, problem, holdout[:, :3])

    def test_scaled_artifacts_are_not_supported(self):
        problem, artifact, holdout = self.random_start(27)
        scaled = QuantizedArtifact(
            d_out=4, d_in=6, g=3, codebooks=artifact.codebooks, codes=artifact.codes,
            scales=np.ones(4, dtype=np.float32),
        )
        with self.assertRaises(UnsupportedError):
            pv_finetune(scaled, problem, holdout)
