"""
Additive code model: lookup dequantization, reconstruction and the losses
of the layer objective. Losses accumulate in float64 over float32 storage.
"""
import math

import numpy as np

from common.exceptions import (
    AssignmentError, ContractViolationError, DimensionError, DomainError,
)
from tensorio.models import DenseMatrix, QuantizedArtifact

SYMMETRY_TOLERANCE = 1e-6


def _as_array(matrix):
    return np.asarray(getattr(matrix, 'data', matrix))


def quadratic_form(residuals, hessians):
    """
    r^T H r for stacks of residuals, summed in a fixed order.

    Args:
        residuals (ndarray): Shape (n, ..., g); axis 0 indexes groups
        hessians (ndarray): Shape (n, g, g), one matrix per group

    Returns:
        ndarray: Shape (n, ...)
    """
    g = residuals.shape[-1]
    lead = (hessians.shape[0],) + (1,) * (residuals.ndim - 2)
    total = np.zeros(residuals.shape[:-1])
    for i in range(g):
        row = np.zeros(residuals.shape[:-1])
        for j in range(g):
            row += hessians[:, i, j].reshape(lead) * residuals[..., j]
        total += residuals[..., i] * row
    return total


def dequantize_group(codebooks, code):
    """
    Reconstruct one group as the sum of its M selected codewords.

    Pure lookup: M table reads and M - 1 vector additions, nothing else.
    """
    code = [int(index) for index in code]
    if len(code) != codebooks.M:
        raise DimensionError(f"code has {len(code)} indices, there are {codebooks.M} codebooks")
    for index in code:
        if not 0 <= index < codebooks.K:
            raise AssignmentError(index, codebooks.K)
    vector = codebooks.entries[0, code[0]].copy()
    for m in range(1, codebooks.M):
        vector += codebooks.entries[m, code[m]]
    return vector


def residuals_for(targets, codebooks, codes):
    """
    Residuals t - sum_m c_{m,b_m}, subtracting codebooks in order, in float64.
    """
    codes = getattr(codes, 'codes', codes)
    entries = codebooks.wide()
    residual = np.array(targets, dtype=np.float64, copy=True)
    for m in range(codebooks.M):
        residual -= entries[m][codes[:, m]]
    return residual


def reconstruct_matrix(codebooks, codes, shape, scales=None):
    """
    Rebuild W-hat from codes, group order row-major over (row, column block).
    """
    d_out, d_in = shape
    codes.check_against(codebooks)
    if codes.N * codebooks.g != d_out * d_in:
        raise DimensionError(
            f"{codes.N} groups of {codebooks.g} weights cannot fill a {d_out}x{d_in} matrix"
        )
    if d_in % codebooks.g:
        raise DimensionError(f"g={codebooks.g} must divide d_in={d_in}")
    groups = codebooks.entries[0][codes.codes[:, 0]].copy()
    for m in range(1, codebooks.M):
        groups += codebooks.entries[m][codes.codes[:, m]]
    weights = groups.reshape(d_out, d_in)
    if scales is not None:
        weights = weights * np.asarray(scales, dtype=np.float32)[:, None]
    return DenseMatrix(weights)


def build_artifact(codebooks, codes, d_out, d_in, scales=None):
    codes.check_against(codebooks)
    return QuantizedArtifact(
        d_out=d_out,
        d_in=d_in,
        g=codebooks.g,
        codebooks=codebooks.entries,
        codes=codes.codes,
        scales=scales,
    )


def representational_ratio(N, K, M):
    """
    rho = N / K^M; K^M is exact in Python integers, float only on overflow.
    """
    if K < 1 or M < 1:
        raise DomainError(f"K and M must be positive, got K={K}, M={M}")
    try:
        return N / (K ** M)
    except OverflowError:
        return float(N) / math.pow(float(K), M)


def bits_per_parameter(M, K, g):
    if K < 1 or M < 1 or g < 1:
        raise DomainError(f"M, K and g must be positive, got M={M}, K={K}, g={g}")
    return M * math.log2(K) / g


def classify_regime(rho):
    if rho < 1:
        return 'overcomplete'
    if rho > 1:
        return 'undercomplete'
    return 'balanced'


def layer_loss(X, W, W_hat):
    """
    ||X W^T - X W_hat^T||_F^2 with W stored d_out x d_in.
    """
    X = _as_array(X).astype(np.float64)
    W = _as_array(W).astype(np.float64)
    W_hat = _as_array(W_hat).astype(np.float64)
    if W.shape != W_hat.shape:
        raise DimensionError(f"W is {W.shape}, W_hat is {W_hat.shape}")
    if X.ndim != 2 or X.shape[1] != W.shape[1]:
        raise DimensionError(f"X is {X.shape}, W has {W.shape[1]} input columns")
    output_error = X @ (W - W_hat).T
    return float(np.sum(output_error * output_error))


def weight_error(targets, codebooks, codes):
    """
    Sum over groups of ||w - sum_m c_{m,b_m}||^2.
    """
    residual = residuals_for(targets, codebooks, codes)
    return float(np.sum(residual * residual))


def group_loss(w, w_hat, H):
    """
    (w - w_hat)^T H (w - w_hat) for one group.
    """
    H = np.asarray(H, dtype=np.float64)
    error = np.asarray(w, dtype=np.float64) - np.asarray(w_hat, dtype=np.float64)
    if H.shape != (error.size, error.size):
        raise DimensionError(f"H is {H.shape}, group has {error.size} weights")
    if H.size and np.max(np.abs(H - H.T)) > SYMMETRY_TOLERANCE:
        raise ContractViolationError("H is not symmetric")
    return float(quadratic_form(error[None, :], H[None])[0])
