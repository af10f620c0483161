"""
Output-aware EM refinement of one codebook.

E-step: hard reassignment to the nearest centroid under the Mahalanobis
distance (t - c)^T H_i (t - c). M-step: Adam steps on the Hessian-weighted
loss L = (1/N) sum_i e_i^T H_i e_i with assignments fixed and a cosine
learning-rate schedule from lr down to lr_floor_fraction * lr.
"""
import logging
import math

import numpy as np
import torch

from common.exceptions import DimensionError, DivergenceError
from common.utils import chunk_slices, run_ordered
from .codebooks import quadratic_form
from .models import ClusterState, OaemConfig

logger = logging.getLogger(__name__)

ASSIGN_CHUNK_ELEMENTS = 1 << 20


def _hessians(bank, layout, targets, centroids=None):
    hessians = bank.group_blocks(layout)
    if hessians.shape[0] != targets.shape[0]:
        raise DimensionError(f"{targets.shape[0]} targets for a layout of {hessians.shape[0]} groups")
    if centroids is not None and centroids.shape[1] != targets.shape[1]:
        raise DimensionError(f"centroids have length {centroids.shape[1]}, targets {targets.shape[1]}")
    return hessians


def mahalanobis_assign(targets, hessians, centroids, threads=1):
    """
    argmin_k (t_i - c_k)^T H_i (t_i - c_k), ties to the smallest k.
    """
    per_group = max(1, centroids.shape[0] * centroids.shape[1])
    slices = chunk_slices(targets.shape[0], ASSIGN_CHUNK_ELEMENTS // per_group)

    def assign_chunk(part):
        diffs = targets[part][:, None, :] - centroids[None, :, :]
        return np.argmin(quadratic_form(diffs, hessians[part]), axis=1)

    if not slices:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate(run_ordered(assign_chunk, slices, threads)).astype(np.int64)


def e_step(targets, bank, layout, centroids, threads=1):
    targets = np.asarray(targets, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    return mahalanobis_assign(targets, _hessians(bank, layout, targets, centroids), centroids, threads)


def _loss_and_gradient(targets, hessians, centroids, assign):
    n_groups = targets.shape[0]
    errors = targets - centroids[assign]
    loss = float(np.mean(quadratic_form(errors, hessians)))
    weighted = np.einsum('nij,nj->ni', hessians, errors)
    gradient = np.zeros_like(centroids)
    np.add.at(gradient, assign, weighted)
    gradient *= -2.0 / n_groups
    return loss, gradient


def em_loss(targets, bank, layout, centroids, assign):
    """
    Mean Hessian-weighted reconstruction error over groups.
    """
    targets = np.asarray(targets, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    hessians = _hessians(bank, layout, targets, centroids)
    errors = targets - centroids[np.asarray(assign)]
    return float(np.mean(quadratic_form(errors, hessians)))


def m_step_gradient(targets, bank, layout, centroids, assign):
    """
    dL/dc_k = -(2/N) sum_{i: b_i = k} H_i (t_i - c_k); zero for empty centroids.
    """
    targets = np.asarray(targets, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64)
    hessians = _hessians(bank, layout, targets, centroids)
    return _loss_and_gradient(targets, hessians, centroids, np.asarray(assign))[1]


def cosine_lr(step, total_steps, lr, floor_fraction):
    """
    floor + 0.5 (lr - floor)(1 + cos(pi step / (total_steps - 1))), floor = floor_fraction * lr.
    """
    if total_steps <= 1:
        return lr
    floor = floor_fraction * lr
    return floor + 0.5 * (lr - floor) * (1.0 + math.cos(math.pi * step / (total_steps - 1)))


def oaem_refine(targets, bank, layout, state, cfg=None, threads=1):
    """
    Refine k-means centroids for R rounds of S Adam steps plus one E-step.

    Centroids with no assigned groups stay where they are during a round's
    M-step and may be recaptured by the following E-step.

    Raises:
        DivergenceError: If the loss becomes non-finite
    """
    cfg = cfg or OaemConfig()
    targets = np.asarray(targets, dtype=np.float64)
    hessians = _hessians(bank, layout, targets, state.centroids)
    assign = np.asarray(state.assign, dtype=np.int64).copy()
    K = state.centroids.shape[0]

    centroids = torch.tensor(np.asarray(state.centroids, dtype=np.float64), dtype=torch.float64)
    optimizer = torch.optim.Adam(
        [centroids], lr=cfg.lr, betas=(cfg.beta1, cfg.beta2), eps=cfg.eps
    )
    initial_loss = _loss_and_gradient(targets, hessians, centroids.numpy(), assign)[0]
    history = [initial_loss]
    total = cfg.rounds * cfg.steps_per_round

    for round_index in range(cfg.rounds):
        dead = np.bincount(assign, minlength=K) == 0
        for step in range(cfg.steps_per_round):
            if cfg.schedule_scope == 'round':
                lr = cosine_lr(step, cfg.steps_per_round, cfg.lr, cfg.lr_floor_fraction)
            else:
                lr = cosine_lr(round_index * cfg.steps_per_round + step, total, cfg.lr, cfg.lr_floor_fraction)
            for group in optimizer.param_groups:
                group['lr'] = lr

            loss, gradient = _loss_and_gradient(targets, hessians, centroids.numpy(), assign)
            if not math.isfinite(loss) or not np.all(np.isfinite(gradient)):
                raise DivergenceError(f"round {round_index}, step {step}")

            frozen = centroids.detach().clone() if dead.any() else None
            centroids.grad = torch.from_numpy(gradient)
            optimizer.step()
            if frozen is not None:
                with torch.no_grad():
                    centroids[torch.from_numpy(dead)] = frozen[torch.from_numpy(dead)]

        current = centroids.detach().numpy()
        if not np.all(np.isfinite(current)):
            raise DivergenceError(f"round {round_index}, step {cfg.steps_per_round}")
        assign = mahalanobis_assign(targets, hessians, current, threads)
        round_loss = _loss_and_gradient(targets, hessians, current, assign)[0]
        history.append(round_loss)
        logger.debug("OA-EM round %d: loss %g", round_index, round_loss)

    final = centroids.detach().numpy().copy()
    final_loss = history[-1]
    warnings = list(state.warnings)
    if final_loss > initial_loss:
        message = f"OA-EM loss rose from {initial_loss:.6g} to {final_loss:.6g}"
        logger.warning(message)
        warnings.append(message)

    return ClusterState(
        centroids=final,
        assign=assign,
        inertia=final_loss * targets.shape[0],
        iterations=cfg.rounds,
        history=history,
        warnings=warnings,
    )


class OaemRefiner:
    """
    Hook for residual_init: runs OA-EM on each codebook before its residuals are taken.
    """

    def __init__(self, bank, layout, cfg=None, threads=1):
        self.bank = bank
        self.layout = layout
        self.cfg = cfg or OaemConfig()
        self.threads = threads
        self.warnings = []

    def __call__(self, stage, targets, state):
        refined = oaem_refine(targets, self.bank, self.layout, state, self.cfg, self.threads)
        self.warnings.extend(f"codebook {stage}: {message}" for message in refined.warnings)
        logger.info(
            "OA-EM codebook %d: loss %.6g -> %.6g", stage, refined.history[0], refined.history[-1]
        )
        return refined
