from dataclasses import dataclass
from typing import Optional

import numpy as np

from common.exceptions import AssignmentError, DimensionError, DomainError

MAX_CODEBOOK_SIZE = 256


def _frozen_array(values, dtype):
    array = np.array(values, dtype=dtype, order='C', copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """Row-major float32 matrix; holds W (d_out x d_in) or X (n x d_in)."""

    data: np.ndarray

    def __post_init__(self):
        array = _frozen_array(self.data, np.float32)
        if array.ndim != 2:
            raise DimensionError(f"matrix must be 2-D, got {array.ndim}-D")
        if not np.all(np.isfinite(array)):
            raise DomainError("matrix contains non-finite values")
        object.__setattr__(self, 'data', array)

    @classmethod
    def from_values(cls, rows, cols, values):
        values = np.asarray(values, dtype=np.float32)
        if values.size != rows * cols:
            raise DimensionError(f"{values.size} values for a {rows}x{cols} matrix")
        return cls(values.reshape(rows, cols))

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, DenseMatrix):
            return NotImplemented
        return self.shape == other.shape and self.data.tobytes() == other.data.tobytes()

    def __repr__(self):
        return f"DenseMatrix({self.rows}x{self.cols})"


@dataclass(frozen=True, eq=False)
class QuantizedArtifact:
    """Serialisable additive-quantized layer: codebooks, codes and optional row scales."""

    d_out: int
    d_in: int
    g: int
    codebooks: np.ndarray
    codes: np.ndarray
    scales: Optional[np.ndarray] = None

    def __post_init__(self):
        codebooks = _frozen_array(self.codebooks, np.float32)
        codes = _frozen_array(self.codes, np.int64)
        if codebooks.ndim != 3:
            raise DimensionError("codebooks must be shaped (M, K, g)")
        M, K, g = codebooks.shape
        if M < 1 or K < 1:
            raise DomainError("need at least one codebook with at least one entry")
        if K > MAX_CODEBOOK_SIZE:
            raise DomainError(f"K={K} exceeds {MAX_CODEBOOK_SIZE}; codes must fit one byte")
        if self.g < 1 or g != self.g:
            raise DimensionError(f"codebook entries have length {g}, group size is {self.g}")
        if self.d_out < 1 or self.d_in < 1 or self.d_in % self.g:
            raise DimensionError(f"g={self.g} must divide d_in={self.d_in}")
        if not np.all(np.isfinite(codebooks)):
            raise DomainError("codebooks contain non-finite values")
        n_groups = self.d_out * self.d_in // self.g
        if codes.shape != (n_groups, M):
            raise DimensionError(f"codes shaped {codes.shape}, expected {(n_groups, M)}")
        if codes.size and (codes.min() < 0 or codes.max() >= K):
            bad = codes.max() if codes.max() >= K else codes.min()
            raise AssignmentError(int(bad), K)
        object.__setattr__(self, 'codebooks', codebooks)
        object.__setattr__(self, 'codes', _frozen_array(codes, np.uint8))
        if self.scales is not None:
            scales = _frozen_array(self.scales, np.float32)
            if scales.shape != (self.d_out,):
                raise DimensionError(f"scales shaped {scales.shape}, expected ({self.d_out},)")
            object.__setattr__(self, 'scales', scales)

    @property
    def M(self):
        return self.codebooks.shape[0]

    @property
    def K(self):
        return self.codebooks.shape[1]

    @property
    def N(self):
        return self.codes.shape[0]

    @property
    def has_scales(self):
        return self.scales is not None

    def __eq__(self, other):
        if not isinstance(other, QuantizedArtifact):
            return NotImplemented
        same_scales = (
            self.scales is None and other.scales is None
        ) or (
            self.scales is not None and other.scales is not None
            and self.scales.tobytes() == other.scales.tobytes()
        )
        return (
            (self.d_out, self.d_in, self.g) == (other.d_out, other.d_in, other.g)
            and self.codebooks.shape == other.codebooks.shape
            and self.codebooks.tobytes() == other.codebooks.tobytes()
            and self.codes.tobytes() == other.codes.tobytes()
            and same_scales
        )

    def __repr__(self):
        return (
            f"QuantizedArtifact(d_out={self.d_out}, d_in={self.d_in}, g={self.g}, "
            f"M={self.M}, K={self.K}, scales={self.has_scales})"
        )
