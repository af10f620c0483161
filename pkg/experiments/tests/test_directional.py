"""
Slow statistical experiments on synthetic outlier-mixture layers.

Excluded from the default run; `python run_tests.py --directional` includes them.
"""
from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase, tag

from common.utils import derive_seed
from quantization.beam import quantize_layer
from quantization.finetune import pv_finetune
from quantization.hessian import build_hessian_bank
from quantization.models import PvConfig
from ..analysis import domain_shift_eval, initialise, rho_sweep, summarise_sweep, sweep_layer
from ..models import ActivationSpec, SweepConfig
from ..synth import gen_activations

SEEDS = range(20)
THREADS = 4


def quantized_pair(cfg, N, seed):
    problem = sweep_layer(cfg, N, seed)
    bank = build_hessian_bank(problem.X, cfg.g, cfg.damp_factor)
    results = {}
    for init_kind in ('greedy', 'oaem'):
        init = initialise(
            problem, bank, 2, 16, init_kind, derive_seed(seed, 'init'), cfg.oaem, cfg.kmeans_max_iters, THREADS
        )
        results[init_kind] = quantize_layer(problem, init, bank, replace(cfg.beam, width=4), THREADS)
    return problem, results


def activations(cfg, seed, label, **extra):
    return ActivationSpec(
        n_rows=cfg.calib_rows, d_in=cfg.d_in, profile=cfg.profile, decay=cfg.decay, seed=derive_seed(seed, label),
        **extra,
    )


@tag('directional')
class RepresentationalRatioTestCase(SimpleTestCase):
    def test_oaem_advantage_grows_with_rho(self):
        summary = {cell['N']: cell for cell in summarise_sweep(rho_sweep(SweepConfig(), THREADS))}
        dense = summary[4096]
        self.assertGreaterEqual(dense['oaem_win_fraction'], 0.9)
        self.assertGreaterEqual(dense['median_ratio'], 1.5)
        self.assertLessEqual(summary[64]['median_ratio'], 1.2)
        self.assertGreater(dense['median_ratio'], summary[64]['median_ratio'])


@tag('directional')
class DomainShiftDirectionTestCase(SimpleTestCase):
    def test_greedy_degrades_more_under_shift(self):
        cfg = SweepConfig()
        wins = 0
        for seed in SEEDS:
            problem, results = quantized_pair(cfg, 4096, seed)
            X_shift = gen_activations(activations(cfg, seed, 'activations', shift_scale=4.0), shifted=True)
            ratios = {
                kind: domain_shift_eval(result.artifact, problem.W, problem.X, X_shift)[2]
                for kind, result in results.items()
            }
            wins += ratios['greedy'] >= ratios['oaem']
        self.assertGreater(wins, len(SEEDS) / 2)


@tag('directional')
class BasinPersistenceTestCase(SimpleTestCase):
    def test_oaem_basin_survives_finetuning(self):
        cfg = SweepConfig()
        budget = PvConfig(outer_steps=200, reassign_every=25, beam_width=4, damp_factor=cfg.damp_factor)
        wins = 0
        for seed in SEEDS:
            problem, results = quantized_pair(cfg, 4096, seed)
            holdout = gen_activations(activations(cfg, seed, 'holdout'))
            final = {}
            for kind, result in results.items():
                tuned = pv_finetune(result.artifact, problem, holdout, budget, THREADS)
                losses = np.array([loss for _, loss in tuned.trace])
                self.assertLessEqual(tuned.loss, losses[0])
                self.assertEqual(tuned.loss, losses.min())
                final[kind] = tuned.loss
            wins += final['oaem'] <= final['greedy']
        self.assertGreater(wins, len(SEEDS) / 2)
