"""
Domain types of the additive code model.

Group layout: group i holds g consecutive weights of one output row,
i = row * (d_in / g) + column_block. Every row therefore shares the
column-block Hessian of its block.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from common.exceptions import AssignmentError, DimensionError, DomainError
from tensorio.models import DenseMatrix, QuantizedArtifact


def _readonly(values, dtype):
    array = np.array(values, dtype=dtype, order='C', copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class GroupLayout:
    d_out: int
    d_in: int
    g: int

    def __post_init__(self):
        if self.g < 1 or self.d_in % self.g:
            raise DimensionError(f"g={self.g} must divide d_in={self.d_in}")

    @property
    def n_blocks(self):
        return self.d_in // self.g

    @property
    def n_groups(self):
        return self.d_out * self.n_blocks

    def _check(self, group_index):
        if not 0 <= group_index < self.n_groups:
            raise DomainError(f"group index {group_index} outside [0, {self.n_groups})")

    def block_of(self, group_index):
        self._check(group_index)
        return group_index % self.n_blocks

    def row_of(self, group_index):
        self._check(group_index)
        return group_index // self.n_blocks

    def block_indices(self):
        return np.tile(np.arange(self.n_blocks), self.d_out)


@dataclass(frozen=True, eq=False)
class CodebookSet:
    """M codebooks of K entries, each a g-vector; entries[m, k] is c_{m,k}."""

    entries: np.ndarray

    def __post_init__(self):
        entries = _readonly(self.entries, np.float32)
        if entries.ndim != 3:
            raise DimensionError("codebook entries must be shaped (M, K, g)")
        if entries.shape[0] < 1 or entries.shape[1] < 1:
            raise DomainError("need M >= 1 codebooks with K >= 1 entries")
        if not np.all(np.isfinite(entries)):
            raise DomainError("codebook entries must be finite")
        object.__setattr__(self, 'entries', entries)

    @classmethod
    def from_artifact(cls, artifact):
        return cls(artifact.codebooks)

    @property
    def M(self):
        return self.entries.shape[0]

    @property
    def K(self):
        return self.entries.shape[1]

    @property
    def g(self):
        return self.entries.shape[2]

    def wide(self):
        return self.entries.astype(np.float64)


@dataclass(frozen=True, eq=False)
class CodeMatrix:
    """Per-group code indices b_1..b_M, one row per group."""

    codes: np.ndarray

    def __post_init__(self):
        codes = _readonly(self.codes, np.int64)
        if codes.ndim != 2:
            raise DimensionError("codes must be shaped (N, M)")
        object.__setattr__(self, 'codes', codes)

    @classmethod
    def from_artifact(cls, artifact):
        return cls(artifact.codes)

    @property
    def N(self):
        return self.codes.shape[0]

    @property
    def M(self):
        return self.codes.shape[1]

    def check_against(self, codebooks):
        if self.M != codebooks.M:
            raise DimensionError(f"codes carry {self.M} indices per group, there are {codebooks.M} codebooks")
        if self.codes.size:
            if self.codes.min() < 0:
                raise AssignmentError(int(self.codes.min()), codebooks.K)
            if self.codes.max() >= codebooks.K:
                raise AssignmentError(int(self.codes.max()), codebooks.K)


@dataclass(frozen=True, eq=False)
class LayerProblem:
    """Quantization instance: weights W (d_out x d_in), activations X (n x d_in), group size g."""

    W: DenseMatrix
    X: DenseMatrix
    g: int

    def __post_init__(self):
        if self.X.cols != self.W.cols:
            raise DimensionError(f"X has {self.X.cols} columns, W has {self.W.cols}")
        if self.g < 1 or self.W.cols % self.g:
            raise DimensionError(f"g={self.g} must divide d_in={self.W.cols}")

    @property
    def layout(self):
        return GroupLayout(self.W.rows, self.W.cols, self.g)

    def groups(self):
        return self.W.data.astype(np.float64).reshape(-1, self.g)


@dataclass(frozen=True, eq=False)
class HessianBank:
    """Damped column-block Hessians H_j = X_j^T X_j + lambda I."""

    blocks: np.ndarray
    lam: float
    damp_factor: float = 0.0
    mean_diag: float = 0.0

    @classmethod
    def identity(cls, n_blocks, g):
        return cls(blocks=np.broadcast_to(np.eye(g), (n_blocks, g, g)).copy(), lam=0.0)

    @property
    def g(self):
        return self.blocks.shape[-1]

    @property
    def n_blocks(self):
        return self.blocks.shape[0]

    def group_blocks(self, layout):
        if layout.n_blocks != self.n_blocks or layout.g != self.g:
            raise DimensionError(
                f"bank holds {self.n_blocks} blocks of size {self.g}, layout needs "
                f"{layout.n_blocks} of size {layout.g}"
            )
        return self.blocks[layout.block_indices()]


@dataclass
class ClusterState:
    centroids: np.ndarray
    assign: np.ndarray
    inertia: float
    iterations: int = 0
    history: List[float] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class OaemConfig:
    rounds: int = 3
    steps_per_round: int = 100
    lr: float = 1e-4
    lr_floor_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    schedule_scope: str = 'round'


@dataclass(frozen=True)
class BeamConfig:
    width: int = 8
    max_epochs: int = 100
    early_stop_rel: float = 0.01
    metric: str = 'hessian'
    codebook_update_steps: int = 25
    codebook_lr: float = 1e-4


@dataclass(frozen=True)
class PvConfig:
    outer_steps: int = 200
    reassign_every: Optional[int] = 25
    lr: float = 3e-4
    beam_width: int = 8
    damp_factor: float = 0.01


@dataclass
class LayerResult:
    """Outcome of a layer-level optimisation loop."""

    artifact: QuantizedArtifact
    codebooks: CodebookSet
    codes: CodeMatrix
    loss: float
    trace: List[Tuple[int, float]]
    warnings: List[str] = field(default_factory=list)
    accepted_updates: int = 0

    @property
    def epochs_run(self):
        return len(self.trace) - 1
