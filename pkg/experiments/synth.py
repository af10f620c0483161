"""
Deterministic synthetic layers: Gaussian weights with whole-group outliers,
and calibration activations with a chosen per-dimension std profile.

Stream splitting: every matrix row draws from its own Philox substream
(seed, kind, row), and the outlier choice and the shifted dimensions have
their own substreams. Output never depends on how rows are scheduled.
"""
import logging

import numpy as np

from common.utils import make_rng, run_ordered
from tensorio.models import DenseMatrix

logger = logging.getLogger(__name__)


def outlier_groups(spec):
    """
    Indices of the groups scaled by outlier_scale, in ascending order.
    """
    count = int(round(spec.outlier_fraction * spec.n_groups))
    order = make_rng(spec.seed, 'outliers').permutation(spec.n_groups)
    return np.sort(order[:count])


def gen_weights(spec, threads=1):
    def weight_row(row):
        return make_rng(spec.seed, 'weights', row).standard_normal(spec.d_in) * spec.base_std

    W = np.stack(run_ordered(weight_row, range(spec.d_out), threads))
    groups = W.reshape(spec.n_groups, spec.g)
    groups[outlier_groups(spec)] *= spec.outlier_scale
    return DenseMatrix(W)


def activation_stds(spec):
    if spec.profile == 'decaying':
        return spec.base_std * np.exp(-spec.decay * np.arange(spec.d_in) / spec.d_in)
    return np.full(spec.d_in, spec.base_std)


def shifted_dimensions(spec):
    return np.sort(make_rng(spec.seed, 'shift').permutation(spec.d_in)[:spec.d_in // 2])


def gen_activations(spec, shifted=False, threads=1):
    """
    Rows i.i.d. Gaussian with per-dimension stds from the ActivationSpec profile.

    The shifted variant draws the very same samples and multiplies a
    seeded half of the dimensions by shift_scale.
    """
    if spec.n_rows < spec.d_in:
        logger.warning(
            "Only %d activation rows for %d inputs; Hessian blocks rely on damping", spec.n_rows, spec.d_in
        )
    stds = activation_stds(spec)
    if shifted:
        stds = stds.copy()
        stds[shifted_dimensions(spec)] *= spec.shift_scale

    def activation_row(row):
        return make_rng(spec.seed, 'activations', row).standard_normal(spec.d_in) * stds

    return DenseMatrix(np.stack(run_ordered(activation_row, range(spec.n_rows), threads)))
