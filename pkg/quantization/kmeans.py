"""
Greedy residual k-means initialisation with Euclidean distance.
"""
import logging

import numpy as np

from common.exceptions import DomainError
from common.utils import derive_seed, make_rng
from .models import ClusterState, CodebookSet, CodeMatrix

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 25
DEFAULT_TOL = 1e-4


def _as_points(points):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    return points


def squared_distances(points, centroids):
    diff = points[:, None, :] - centroids[None, :, :]
    return np.sum(diff * diff, axis=2)


def kmeanspp_seed(points, K, rng_seed):
    """
    k-means++ seeding: first centroid uniform, then proportional to D^2.

    When every remaining distance is zero (duplicates, or K > N) the next
    centroid is a uniformly sampled point.
    """
    points = _as_points(points)
    if points.shape[0] < 1:
        raise DomainError("cannot seed centroids from an empty point set")
    if K < 1:
        raise DomainError(f"K must be positive, got {K}")

    rng = make_rng(rng_seed, 'kmeanspp')
    n_points = points.shape[0]
    chosen = [int(rng.integers(n_points))]
    nearest = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, K):
        total = nearest.sum()
        if total > 0:
            index = int(rng.choice(n_points, p=nearest / total))
        else:
            index = int(rng.integers(n_points))
        chosen.append(index)
        nearest = np.minimum(nearest, np.sum((points - points[index]) ** 2, axis=1))
    return points[chosen].copy()


def _assign(points, centroids):
    distances = squared_distances(points, centroids)
    assign = np.argmin(distances, axis=1)
    return assign, distances[np.arange(len(points)), assign]


def _update(points, assign, point_costs, centroids):
    K, g = centroids.shape
    sums = np.zeros((K, g))
    np.add.at(sums, assign, points)
    counts = np.bincount(assign, minlength=K)
    updated = centroids.copy()
    live = counts > 0
    updated[live] = sums[live] / counts[live][:, None]

    empty = np.flatnonzero(~live)
    if empty.size:
        # farthest points first, ties by index
        order = np.lexsort((np.arange(len(points)), -point_costs))
        for slot, cluster in enumerate(empty):
            updated[cluster] = points[order[slot % len(order)]]
        logger.debug("Reseeded %d empty clusters", empty.size)
    return updated


def lloyd(points, centroids, max_iters=DEFAULT_MAX_ITERS, tol=DEFAULT_TOL):
    """
    Lloyd iterations with Euclidean assignment and mean updates.

    Stops at an assignment fixpoint, when the relative inertia improvement
    drops below tol, or after max_iters updates. Ties go to the smallest
    centroid index.
    """
    points = _as_points(points)
    centroids = _as_points(centroids).copy()
    assign, point_costs = _assign(points, centroids)
    inertia = float(point_costs.sum())
    history = [inertia]
    iterations = 0

    while iterations < max_iters and inertia > 0:
        updated = _update(points, assign, point_costs, centroids)
        new_assign, new_costs = _assign(points, updated)
        new_inertia = float(new_costs.sum())
        iterations += 1
        fixpoint = np.array_equal(new_assign, assign)
        improvement = (inertia - new_inertia) / inertia
        centroids, assign, point_costs, inertia = updated, new_assign, new_costs, new_inertia
        history.append(inertia)
        if fixpoint or improvement < tol:
            break

    if iterations == 0:
        iterations = 1
    return ClusterState(
        centroids=centroids,
        assign=assign,
        inertia=inertia,
        iterations=iterations,
        history=history,
    )


def residual_init(groups, M, K, rng_seed, refine=None, max_iters=DEFAULT_MAX_ITERS, tol=DEFAULT_TOL):
    """
    Fit M codebooks one after another, each on the residuals of the previous.

    Args:
        groups: Weight groups, N x g
        M (int): Number of codebooks
        K (int): Entries per codebook
        rng_seed (int): Root seed; codebook m seeds from substream m
        refine: Optional callable (stage, targets, state) -> ClusterState run
            on each codebook before its residuals are taken (OA-EM hook)

    Returns:
        tuple: (CodebookSet, CodeMatrix)
    """
    if M < 1:
        raise DomainError(f"M must be at least 1, got {M}")
    targets = _as_points(groups).copy()
    n_groups, g = targets.shape
    entries = np.zeros((M, K, g), dtype=np.float32)
    codes = np.zeros((n_groups, M), dtype=np.int64)

    for stage in range(M):
        seeds = kmeanspp_seed(targets, K, derive_seed(rng_seed, 'codebook', stage))
        state = lloyd(targets, seeds, max_iters=max_iters, tol=tol)
        logger.debug("Codebook %d: k-means inertia %g after %d iterations", stage, state.inertia, state.iterations)
        if refine is not None:
            state = refine(stage, targets, state)
        entries[stage] = state.centroids.astype(np.float32)
        codes[:, stage] = state.assign
        targets = targets - entries[stage].astype(np.float64)[state.assign]

    logger.info("Residual init done: M=%d, K=%d, weight error %g", M, K, float(np.sum(targets * targets)))
    return CodebookSet(entries), CodeMatrix(codes)
