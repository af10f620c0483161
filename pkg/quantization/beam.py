"""
Discrete code assignment (greedy, beam, exhaustive) and the layer-level
epoch loop that alternates beam reassignment with codebook updates.

All candidate costs go through codebooks.quadratic_form on residuals built
by subtracting codewords in codebook order, so the same code always gets
the same cost bit for bit, whichever search produced it.
"""
import itertools
import logging
import math

import numpy as np
import torch

from common.exceptions import DimensionError, DivergenceError, OracleTooLargeError
from common.utils import addq_setting, chunk_slices, run_ordered
from .codebooks import build_artifact, quadratic_form, residuals_for
from .hessian import identity_blocks
from .models import BeamConfig, CodebookSet, CodeMatrix, LayerResult

logger = logging.getLogger(__name__)

SEARCH_CHUNK_ELEMENTS = 1 << 21


def _lex_keys(codes, K):
    keys = np.zeros(codes.shape[:-1], dtype=np.int64)
    for position in range(codes.shape[-1]):
        keys = keys * K + codes[..., position]
    return keys


def _stack_hessians(H, n_groups, g):
    if H is None:
        return identity_blocks(n_groups, g)
    H = np.asarray(H, dtype=np.float64)
    if H.ndim == 2:
        return np.broadcast_to(H, (n_groups, g, g))
    return H


def code_costs(targets, codebooks, hessians, codes):
    """
    Full reconstruction cost r^T H r of each group's code.
    """
    return quadratic_form(residuals_for(targets, codebooks, codes), hessians)


def _best_by_cost_then_code(codes, costs, K):
    by_code = np.argsort(_lex_keys(codes, K), axis=1, kind='stable')
    costs_sorted = np.take_along_axis(costs, by_code, axis=1)
    first = np.argsort(costs_sorted, axis=1, kind='stable')[:, 0]
    pick = np.take_along_axis(by_code, first[:, None], axis=1)[:, 0]
    rows = np.arange(codes.shape[0])
    return codes[rows, pick], costs[rows, pick]


def search_codes(targets, codebooks, hessians, width, previous=None):
    """
    Beam search over codebooks for a batch of groups.

    Keeps the `width` cheapest partial codes per stage, ranked by the metric
    of the residual left after the stage; ties go to the lexicographically
    smallest code. When `previous` codes are given they compete with the
    final beam, so the returned cost never exceeds the previous cost.

    Args:
        targets: n x g group vectors
        codebooks (CodebookSet): Codebooks searched in order
        hessians: n x g x g metric per group
        width (int): Beam width b >= 1
        previous: Optional n x M codes

    Returns:
        tuple: (n x M codes, n costs)
    """
    targets = np.asarray(targets, dtype=np.float64)
    n_groups, g = targets.shape
    M, K = codebooks.M, codebooks.K
    entries = codebooks.wide()
    if width < 1:
        raise DimensionError(f"beam width must be at least 1, got {width}")

    codes = None
    residuals = targets[:, None, :]
    costs = None
    for m in range(M):
        if codes is not None and codes.shape[1] > 1:
            order = np.argsort(_lex_keys(codes, K), axis=1, kind='stable')
            codes = np.take_along_axis(codes, order[:, :, None], axis=1)
            residuals = np.take_along_axis(residuals, order[:, :, None], axis=1)
        parents = residuals.shape[1]
        expanded = residuals[:, :, None, :] - entries[m][None, None, :, :]
        stage_costs = quadratic_form(expanded, hessians).reshape(n_groups, parents * K)
        keep = min(width, parents * K)
        order = np.argsort(stage_costs, axis=1, kind='stable')[:, :keep]
        chosen = (order % K)[:, :, None]
        if codes is None:
            codes = chosen
        else:
            codes = np.concatenate(
                [np.take_along_axis(codes, (order // K)[:, :, None], axis=1), chosen], axis=2
            )
        residuals = np.take_along_axis(
            expanded.reshape(n_groups, parents * K, g), order[:, :, None], axis=1
        )
        costs = np.take_along_axis(stage_costs, order, axis=1)

    best_codes, best_costs = _best_by_cost_then_code(codes, costs, K)
    if previous is not None:
        previous = np.asarray(previous, dtype=np.int64)
        previous_costs = code_costs(targets, codebooks, hessians, previous)
        candidates = np.stack([best_codes, previous], axis=1)
        candidate_costs = np.stack([best_costs, previous_costs], axis=1)
        best_codes, best_costs = _best_by_cost_then_code(candidates, candidate_costs, K)
    return best_codes, best_costs


def greedy_assign(target, codebooks, H=None):
    """
    Pick the best entry of each codebook in turn; beam search with b = 1.
    """
    return beam_assign(target, codebooks, H, 1)


def beam_assign(target, codebooks, H, b):
    target = np.asarray(target, dtype=np.float64).reshape(1, -1)
    hessians = _stack_hessians(H, 1, target.shape[1])
    codes, _ = search_codes(target, codebooks, hessians, b)
    return tuple(int(index) for index in codes[0])


def exhaustive_codes(targets, codebooks, hessians, cap=None):
    """
    Global argmin over all K^M codes for each group, ties to the smallest code.

    Raises:
        OracleTooLargeError: If K^M exceeds the cap
    """
    cap = addq_setting('EXHAUSTIVE_CAP') if cap is None else cap
    total = codebooks.K ** codebooks.M
    if total > cap:
        raise OracleTooLargeError(total, cap)
    targets = np.asarray(targets, dtype=np.float64)
    every_code = np.array(list(itertools.product(range(codebooks.K), repeat=codebooks.M)), dtype=np.int64)
    entries = codebooks.wide()
    best_codes = np.zeros((targets.shape[0], codebooks.M), dtype=np.int64)
    best_costs = np.zeros(targets.shape[0])

    for part in chunk_slices(targets.shape[0], max(1, SEARCH_CHUNK_ELEMENTS // total)):
        residuals = np.repeat(targets[part][:, None, :], total, axis=1)
        for m in range(codebooks.M):
            residuals -= entries[m][every_code[:, m]][None, :, :]
        costs = quadratic_form(residuals, hessians[part])
        pick = np.argmin(costs, axis=1)
        best_codes[part] = every_code[pick]
        best_costs[part] = costs[np.arange(len(pick)), pick]
    return best_codes, best_costs


def exhaustive_assign(target, codebooks, H=None, cap=None):
    target = np.asarray(target, dtype=np.float64).reshape(1, -1)
    hessians = _stack_hessians(H, 1, target.shape[1])
    codes, _ = exhaustive_codes(target, codebooks, hessians, cap)
    return tuple(int(index) for index in codes[0])


def reassign_layer(targets, codebooks, hessians, width, previous, threads=1):
    """
    Previous-code-seeded beam pass over every group of a layer.
    """
    parents = min(width, codebooks.K ** max(codebooks.M - 1, 0))
    per_group = max(1, parents * codebooks.K * codebooks.g)
    slices = chunk_slices(targets.shape[0], SEARCH_CHUNK_ELEMENTS // per_group)

    def search_chunk(part):
        return search_codes(targets[part], codebooks, hessians[part], width, previous[part])

    results = run_ordered(search_chunk, slices, threads)
    codes = np.concatenate([codes for codes, _ in results])
    costs = np.concatenate([costs for _, costs in results])
    return codes, costs


def _codebook_gradient(targets, hessians, entries, codes):
    residual = targets.copy()
    for m in range(entries.shape[0]):
        residual -= entries[m][codes[:, m]]
    weighted = np.einsum('nij,nj->ni', hessians, residual)
    gradient = np.zeros_like(entries)
    for m in range(entries.shape[0]):
        np.add.at(gradient[m], codes[:, m], weighted)
    return gradient * (-2.0 / targets.shape[0])


def update_codebooks(targets, hessians, codebooks, codes, steps, lr):
    """
    Adam steps on all codebooks jointly with codes fixed.
    """
    entries = torch.tensor(codebooks.wide(), dtype=torch.float64)
    optimizer = torch.optim.Adam([entries], lr=lr)
    for _ in range(steps):
        gradient = _codebook_gradient(targets, hessians, entries.numpy(), codes)
        if not np.all(np.isfinite(gradient)):
            return None
        entries.grad = torch.from_numpy(gradient)
        optimizer.step()
    updated = entries.numpy().astype(np.float32)
    if not np.all(np.isfinite(updated)):
        return None
    return CodebookSet(updated)


def layer_hessians(problem, bank, metric):
    layout = problem.layout
    if metric == 'euclidean':
        return identity_blocks(layout.n_groups, problem.g)
    return bank.group_blocks(layout)


def quantize_layer(problem, init, bank, cfg=None, threads=1):
    """
    Epoch loop: beam reassignment, then codebook update with an
    accept-if-improved guard; stops after max_epochs or when the relative
    improvement between consecutive epochs drops below early_stop_rel.

    The trace holds (epoch, mean per-group loss), epoch 0 being the
    initialisation.

    Raises:
        DivergenceError: If an epoch produces a non-finite loss
    """
    cfg = cfg or BeamConfig()
    codebooks, code_matrix = init
    layout = problem.layout
    targets = problem.groups()
    if code_matrix.N != layout.n_groups or codebooks.g != problem.g:
        raise DimensionError(
            f"init has {code_matrix.N} groups of {codebooks.g}, layer has {layout.n_groups} of {problem.g}"
        )
    code_matrix.check_against(codebooks)
    hessians = layer_hessians(problem, bank, cfg.metric)

    codes = np.array(code_matrix.codes)
    loss = float(np.mean(code_costs(targets, codebooks, hessians, codes)))
    if not math.isfinite(loss):
        raise DivergenceError("epoch 0")
    trace = [(0, loss)]
    warnings = []
    accepted = 0

    for epoch in range(1, cfg.max_epochs + 1):
        codes, costs = reassign_layer(targets, codebooks, hessians, cfg.width, codes, threads)
        current = float(np.mean(costs))

        if cfg.codebook_update_steps > 0:
            candidate = update_codebooks(
                targets, hessians, codebooks, codes, cfg.codebook_update_steps, cfg.codebook_lr
            )
            if candidate is None:
                raise DivergenceError(f"epoch {epoch}")
            candidate_loss = float(np.mean(code_costs(targets, candidate, hessians, codes)))
            if not math.isfinite(candidate_loss):
                raise DivergenceError(f"epoch {epoch}")
            if candidate_loss <= current:
                codebooks, current = candidate, candidate_loss
                accepted += 1
            else:
                warnings.append(f"epoch {epoch}: codebook update reverted")
                logger.warning("Epoch %d: codebook update reverted (%g > %g)", epoch, candidate_loss, current)

        if not math.isfinite(current):
            raise DivergenceError(f"epoch {epoch}")
        previous = trace[-1][1]
        trace.append((epoch, current))
        improvement = (previous - current) / previous if previous > 0 else 0.0
        logger.info("Epoch %d: loss %.9g (relative improvement %.3g)", epoch, current, improvement)
        if improvement < cfg.early_stop_rel:
            break

    if cfg.codebook_update_steps > 0:
        logger.info("Accepted %d of %d codebook updates", accepted, len(trace) - 1)
    code_matrix = CodeMatrix(codes)
    return LayerResult(
        artifact=build_artifact(codebooks, code_matrix, layout.d_out, layout.d_in),
        codebooks=codebooks,
        codes=code_matrix,
        loss=trace[-1][1],
        trace=trace,
        warnings=warnings,
        accepted_updates=accepted,
    )
