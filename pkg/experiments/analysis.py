"""
Gap decomposition of greedy assignment, representational-ratio sweeps,
domain-shift evaluation and the summaries built on them.
"""
import logging
from dataclasses import replace
from statistics import median

import numpy as np

from common.exceptions import DimensionError, UnsupportedError
from common.utils import derive_seed, run_ordered
from quantization.beam import exhaustive_codes, quantize_layer, search_codes
from quantization.codebooks import (
    _as_array, classify_regime, layer_loss, quadratic_form, reconstruct_matrix,
    representational_ratio, weight_error,
)
from quantization.hessian import build_hessian_bank, identity_blocks
from quantization.kmeans import residual_init
from quantization.models import CodebookSet, CodeMatrix, LayerProblem
from quantization.oaem import OaemRefiner
from .models import ActivationSpec, GapDecomposition, OracleReport, SweepRow, WeightSpec
from .synth import gen_activations, gen_weights

logger = logging.getLogger(__name__)


def _decompose_batch(targets, codebooks, hessians):
    if codebooks.M != 2:
        raise UnsupportedError(f"gap decomposition needs exactly 2 codebooks, got {codebooks.M}")
    targets = np.asarray(targets, dtype=np.float64)
    greedy, eps_greedy = search_codes(targets, codebooks, hessians, 1)
    optimal, eps_opt = exhaustive_codes(targets, codebooks, hessians)

    entries = codebooks.wide()
    first_greedy = entries[0][greedy[:, 0]]
    second_greedy = entries[1][greedy[:, 1]]
    residual_opt = targets - entries[0][optimal[:, 0]]
    delta = first_greedy - entries[0][optimal[:, 0]]
    mismatch_vector = residual_opt - second_greedy

    direct = quadratic_form(delta, hessians)
    coupling = -2.0 * np.einsum('ni,nij,nj->n', delta, hessians, mismatch_vector)
    mismatch = quadratic_form(mismatch_vector, hessians) - eps_opt
    return greedy, optimal, delta, direct, coupling, mismatch, eps_greedy, eps_opt


def _decompositions(batch):
    greedy, optimal, delta, direct, coupling, mismatch, eps_greedy, eps_opt = batch
    return [
        GapDecomposition(
            greedy_code=tuple(int(v) for v in greedy[i]),
            optimal_code=tuple(int(v) for v in optimal[i]),
            delta=delta[i],
            direct_cost=float(direct[i]),
            coupling=float(coupling[i]),
            residual_mismatch=float(mismatch[i]),
            eps_greedy=float(eps_greedy[i]),
            eps_opt=float(eps_opt[i]),
        )
        for i in range(len(greedy))
    ]


def decompose_gap(w, codebooks, H=None):
    """
    Decompose eps_greedy - eps_opt for one group into direct cost, coupling
    and residual mismatch.

    The decomposition is stated in the Euclidean metric; passing H evaluates
    the same algebra with H-inner products instead.

    Raises:
        UnsupportedError: If there are not exactly 2 codebooks
        OracleTooLargeError: If K^2 exceeds the exhaustive cap
    """
    w = np.asarray(w, dtype=np.float64).reshape(1, -1)
    g = w.shape[1]
    hessians = identity_blocks(1, g) if H is None else np.asarray(H, dtype=np.float64).reshape(1, g, g)
    return _decompositions(_decompose_batch(w, codebooks, hessians))[0]


def decompose_layer(W, codebooks, hessians=None, threads=1):
    """
    Decompose every group of a layer and summarise how often greedy loses.

    Args:
        W: Weights, d_out x d_in
        codebooks (CodebookSet): Two codebooks
        hessians: Optional per-group metric (n_groups x g x g); Euclidean if omitted
        threads (int): Workers

    Returns:
        tuple: (list of GapDecomposition, summary dict)
    """
    W = _as_array(W).astype(np.float64)
    if W.shape[1] % codebooks.g:
        raise DimensionError(f"g={codebooks.g} must divide d_in={W.shape[1]}")
    targets = W.reshape(-1, codebooks.g)
    if hessians is None:
        hessians = identity_blocks(targets.shape[0], codebooks.g)

    def decompose_chunk(part):
        return _decompositions(_decompose_batch(targets[part], codebooks, hessians[part]))

    chunk = max(1, targets.shape[0] // max(1, threads))
    parts = [slice(start, start + chunk) for start in range(0, targets.shape[0], chunk)]
    decompositions = [item for batch in run_ordered(decompose_chunk, parts, threads) for item in batch]
    return decompositions, summarise_decompositions(decompositions)


def summarise_decompositions(decompositions):
    count = len(decompositions)
    if not count:
        return {'n_groups': 0, 'suboptimal_fraction': 0.0}
    direct = np.array([item.direct_cost for item in decompositions])
    coupling = np.array([item.coupling for item in decompositions])
    mismatch = np.array([item.residual_mismatch for item in decompositions])
    gaps = np.array([item.gap for item in decompositions])
    return {
        'n_groups': count,
        'suboptimal_fraction': float(np.mean([item.greedy_suboptimal for item in decompositions])),
        'mean_direct_cost': float(np.mean(direct)),
        'mean_coupling': float(np.mean(coupling)),
        'mean_residual_mismatch': float(np.mean(mismatch)),
        'mean_gap': float(np.mean(gaps)),
    }


def term_histograms(decompositions, bins=20):
    """
    Histogram rows (term, bin_low, bin_high, count) of the three gap terms.
    """
    rows = []
    for term in ('direct_cost', 'coupling', 'residual_mismatch'):
        values = np.array([getattr(item, term) for item in decompositions])
        if not values.size:
            continue
        counts, edges = np.histogram(values, bins=bins)
        rows.extend((term, edges[i], edges[i + 1], int(counts[i])) for i in range(len(counts)))
    return rows


def oracle_report(targets, codebooks, hessians, width):
    """
    Beam against exhaustive search on every group.
    """
    targets = np.asarray(targets, dtype=np.float64)
    oracle_codes, oracle_costs = exhaustive_codes(targets, codebooks, hessians)
    beam_codes, beam_costs = search_codes(targets, codebooks, hessians, width)
    return OracleReport(beam_codes, beam_costs, oracle_codes, oracle_costs)


def domain_shift_eval(artifact, W, X_cal, X_shift):
    """
    Per-row output error under calibration and shifted activations.

    Returns:
        tuple: (mse_cal, mse_shift, mse_shift / mse_cal); the ratio is 1.0
        when both errors are 0
    """
    W = _as_array(W)
    if W.shape != (artifact.d_out, artifact.d_in):
        raise DimensionError(f"W is {W.shape}, artifact is {artifact.d_out}x{artifact.d_in}")
    W_hat = reconstruct_matrix(
        CodebookSet.from_artifact(artifact), CodeMatrix.from_artifact(artifact), W.shape, artifact.scales
    )
    X_cal = _as_array(X_cal)
    X_shift = _as_array(X_shift)
    mse_cal = layer_loss(X_cal, W, W_hat) / X_cal.shape[0]
    mse_shift = layer_loss(X_shift, W, W_hat) / X_shift.shape[0]
    if mse_cal == 0.0:
        ratio = 1.0 if mse_shift == 0.0 else float('inf')
    else:
        ratio = mse_shift / mse_cal
    return mse_cal, mse_shift, ratio


def initialise(problem, bank, M, K, init_kind, seed, oaem_cfg=None, max_iters=25, threads=1):
    """
    Residual k-means codebooks, refined by OA-EM when init_kind is 'oaem'.
    """
    refine = None
    if init_kind == 'oaem':
        refine = OaemRefiner(bank, problem.layout, oaem_cfg, threads)
    elif init_kind != 'greedy':
        raise UnsupportedError(f"init {init_kind!r}")
    return residual_init(problem.groups(), M, K, seed, refine=refine, max_iters=max_iters)


def sweep_layer(cfg, N, seed):
    """
    The synthetic layer of one sweep replicate: N groups of g weights.
    """
    if (N * cfg.g) % cfg.d_in:
        raise DimensionError(f"N*g={N * cfg.g} weights do not fill rows of d_in={cfg.d_in}")
    weights = WeightSpec(
        d_out=N * cfg.g // cfg.d_in,
        d_in=cfg.d_in,
        g=cfg.g,
        base_std=cfg.base_std,
        outlier_fraction=cfg.outlier_fraction,
        outlier_scale=cfg.outlier_scale,
        seed=derive_seed(seed, 'weights', N),
    )
    activations = ActivationSpec(
        n_rows=cfg.calib_rows,
        d_in=cfg.d_in,
        profile=cfg.profile,
        decay=cfg.decay,
        seed=derive_seed(seed, 'activations'),
    )
    return LayerProblem(W=gen_weights(weights), X=gen_activations(activations), g=cfg.g)


def _replicate_rows(cfg, N, K, M, seed):
    problem = sweep_layer(cfg, N, seed)
    bank = build_hessian_bank(problem.X, cfg.g, cfg.damp_factor)
    rho = representational_ratio(N, K, M)
    rows = []
    for init_kind in cfg.inits:
        init = initialise(
            problem, bank, M, K, init_kind, derive_seed(seed, 'init'), cfg.oaem, cfg.kmeans_max_iters
        )
        for width in cfg.beam_widths:
            result = quantize_layer(problem, init, bank, replace(cfg.beam, width=width))
            rows.append(SweepRow(
                rho=rho,
                N=N,
                K=K,
                M=M,
                seed=seed,
                init_kind=init_kind,
                beam_width=width,
                final_hessian_mse=result.loss,
                weight_mse=weight_error(problem.groups(), result.codebooks, result.codes) / (N * cfg.g),
                epochs_run=result.epochs_run,
            ))
            logger.info(
                "Cell N=%d K=%d M=%d seed=%d init=%s b=%d: loss %.6g after %d epochs",
                N, K, M, seed, init_kind, width, result.loss, result.epochs_run,
            )
    return rows


def rho_sweep(cfg, threads=1):
    """
    Quantize synthetic layers over every (N, K, M, seed, init, beam width) cell.

    Rows come back in cell enumeration order whatever the thread count; both
    inits of a replicate start from the same layer and k-means seed.
    """
    cells = [
        (N, K, M, cfg.seed + replicate)
        for N in cfg.n_values
        for K in cfg.k_values
        for M in cfg.m_values
        for replicate in range(cfg.seeds)
    ]
    batches = run_ordered(lambda cell: _replicate_rows(cfg, *cell), cells, threads)
    return [row for batch in batches for row in batch]


def _cell_key(row):
    return row.N, row.K, row.M, row.beam_width


def summarise_sweep(rows):
    """
    Per (N, K, M, beam width) cell: greedy and OA-EM medians, the median
    per-seed greedy/OA-EM loss ratio and how often OA-EM wins.
    """
    cells = {}
    for row in rows:
        cells.setdefault(_cell_key(row), {}).setdefault(row.init_kind, {})[row.seed] = row

    summary = []
    for (N, K, M, width), by_init in cells.items():
        greedy = by_init.get('greedy', {})
        oaem = by_init.get('oaem', {})
        paired = sorted(set(greedy) & set(oaem))
        if not paired:
            continue
        ratios = [
            greedy[seed].final_hessian_mse / oaem[seed].final_hessian_mse
            for seed in paired if oaem[seed].final_hessian_mse > 0
        ]
        rho = representational_ratio(N, K, M)
        summary.append({
            'N': N,
            'K': K,
            'M': M,
            'beam_width': width,
            'rho': rho,
            'regime': classify_regime(rho),
            'seeds': len(paired),
            'greedy_median_mse': median(greedy[seed].final_hessian_mse for seed in paired),
            'oaem_median_mse': median(oaem[seed].final_hessian_mse for seed in paired),
            'median_ratio': median(ratios) if ratios else float('nan'),
            'oaem_win_fraction': float(np.mean([
                oaem[seed].final_hessian_mse < greedy[seed].final_hessian_mse for seed in paired
            ])),
            'greedy_median_epochs': median(greedy[seed].epochs_run for seed in paired),
            'oaem_median_epochs': median(oaem[seed].epochs_run for seed in paired),
        })
    return summary


def beam_width_response(rows):
    """
    Median final loss per (init, N, K, M) as a function of beam width.
    """
    groups = {}
    for row in rows:
        groups.setdefault((row.init_kind, row.N, row.K, row.M, row.beam_width), []).append(row.final_hessian_mse)
    return [
        {'init_kind': init, 'N': N, 'K': K, 'M': M, 'beam_width': width, 'median_mse': median(values)}
        for (init, N, K, M, width), values in groups.items()
    ]


def pareto_frontier(rows):
    """
    Rows no other row beats on both compute and final loss, cheapest first.
    """
    ordered = sorted(rows, key=lambda row: (row.compute, row.final_hessian_mse))
    frontier = []
    for row in ordered:
        if not frontier or row.final_hessian_mse < frontier[-1].final_hessian_mse:
            frontier.append(row)
    return frontier
