"""
Damped block-diagonal Hessian approximation from calibration activations.
"""
import logging

import numpy as np

from common.exceptions import (
    ContractViolationError, DegenerateCalibrationError, DimensionError,
)
from .codebooks import SYMMETRY_TOLERANCE, _as_array
from .models import HessianBank

logger = logging.getLogger(__name__)


def build_hessian_bank(X, g, damp_factor=0.01):
    """
    Build H_j = X_j^T X_j + lambda I for every g-column block of X.

    lambda is damp_factor times the mean of the undamped diagonal taken
    over all d_in input dimensions.

    Args:
        X: Calibration activations, n x d_in
        g (int): Group size
        damp_factor (float): Multiplier of the mean diagonal

    Returns:
        HessianBank: One g x g block per column block

    Raises:
        DimensionError: If g does not divide d_in or X has no rows
        DegenerateCalibrationError: If X is all zeros
    """
    X = _as_array(X).astype(np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise DimensionError("calibration activations need at least one row")
    n_rows, d_in = X.shape
    if g < 1 or d_in % g:
        raise DimensionError(f"g={g} must divide d_in={d_in}")

    slices = X.reshape(n_rows, d_in // g, g)
    blocks = np.einsum('nbi,nbj->bij', slices, slices)
    mean_diag = float(np.mean(np.einsum('bii->bi', blocks)))
    if mean_diag == 0.0:
        raise DegenerateCalibrationError()

    lam = damp_factor * mean_diag
    blocks = blocks + lam * np.eye(g)
    if np.max(np.abs(blocks - np.swapaxes(blocks, 1, 2))) > SYMMETRY_TOLERANCE * max(1.0, mean_diag):
        raise ContractViolationError("Hessian blocks are not symmetric")
    try:
        np.linalg.cholesky(blocks)
    except np.linalg.LinAlgError:
        raise ContractViolationError(
            f"damped Hessian blocks are not positive definite (lambda={lam:g})"
        )

    logger.debug("Built %d Hessian blocks, lambda=%g", blocks.shape[0], lam)
    return HessianBank(blocks=blocks, lam=lam, damp_factor=damp_factor, mean_diag=mean_diag)


def block_for_group(bank, group_index, layout):
    """
    The Hessian block shared by every group in the same column block.
    """
    return bank.blocks[layout.block_of(group_index)]


def identity_blocks(n_groups, g):
    return np.broadcast_to(np.eye(g), (n_groups, g, g))
