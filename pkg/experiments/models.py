"""
Specs and records of the synthetic experiments.
"""
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, Optional, Tuple

import numpy as np

from common.exceptions import DimensionError, DomainError
from common.utils import canonical_json
from quantization.models import BeamConfig, OaemConfig


@dataclass(frozen=True)
class WeightSpec:
    d_out: int
    d_in: int
    g: int
    base_std: float = 0.02
    outlier_fraction: float = 0.0
    outlier_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.d_out < 1 or self.d_in < 1 or self.g < 1:
            raise DimensionError(f"dimensions must be positive, got {self.d_out}x{self.d_in}, g={self.g}")
        if self.d_in % self.g:
            raise DimensionError(f"g={self.g} must divide d_in={self.d_in}")
        if self.base_std <= 0:
            raise DomainError(f"base_std must be positive, got {self.base_std}")
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise DomainError(f"outlier_fraction must lie in [0, 1], got {self.outlier_fraction}")
        if self.outlier_scale < 1.0:
            raise DomainError(f"outlier_scale must be at least 1, got {self.outlier_scale}")

    @property
    def n_groups(self):
        return self.d_out * self.d_in // self.g


@dataclass(frozen=True)
class ActivationSpec:
    n_rows: int
    d_in: int
    profile: str = 'constant'
    base_std: float = 1.0
    decay: float = 2.0
    shift_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 1 or self.d_in < 1:
            raise DimensionError(f"activations need positive shape, got {self.n_rows}x{self.d_in}")
        if self.profile not in ('constant', 'decaying'):
            raise DomainError(f"unknown std profile {self.profile!r}")
        if self.base_std <= 0 or self.shift_scale <= 0:
            raise DomainError("standard deviations must be positive")
        if self.decay < 0:
            raise DomainError(f"decay must be non-negative, got {self.decay}")


@dataclass(frozen=True, eq=False)
class GapDecomposition:
    """
    Split of the greedy suboptimality gap of one two-codebook group.

    eps_greedy - eps_opt = direct_cost + coupling + residual_mismatch, with
    delta = c1[greedy] - c1[opt] and r_opt = w - c1[opt].
    """

    greedy_code: Tuple[int, int]
    optimal_code: Tuple[int, int]
    delta: np.ndarray
    direct_cost: float
    coupling: float
    residual_mismatch: float
    eps_greedy: float
    eps_opt: float

    @property
    def gap(self):
        return self.eps_greedy - self.eps_opt

    @property
    def greedy_suboptimal(self):
        return self.eps_greedy > self.eps_opt

    @property
    def terms(self):
        return self.direct_cost, self.coupling, self.residual_mismatch


@dataclass(frozen=True)
class SweepRow:
    rho: float
    N: int
    K: int
    M: int
    seed: int
    init_kind: str
    beam_width: int
    final_hessian_mse: float
    weight_mse: float
    epochs_run: int

    @classmethod
    def header(cls):
        return [item.name for item in fields(cls)]

    def values(self):
        return [getattr(self, name) for name in self.header()]

    @property
    def compute(self):
        """Candidate expansions per group over the whole run."""
        return self.epochs_run * self.beam_width * self.K * self.M


@dataclass(frozen=True)
class SweepConfig:
    n_values: Tuple[int, ...] = (64, 4096)
    k_values: Tuple[int, ...] = (16,)
    m_values: Tuple[int, ...] = (2,)
    g: int = 4
    d_in: int = 64
    inits: Tuple[str, ...] = ('greedy', 'oaem')
    beam_widths: Tuple[int, ...] = (4,)
    seeds: int = 20
    seed: int = 0
    base_std: float = 0.02
    outlier_fraction: float = 0.05
    outlier_scale: float = 10.0
    calib_rows: int = 256
    profile: str = 'decaying'
    decay: float = 2.0
    damp_factor: float = 0.01
    kmeans_max_iters: int = 25
    beam: BeamConfig = field(default_factory=BeamConfig)
    oaem: OaemConfig = field(default_factory=OaemConfig)


@dataclass(frozen=True)
class QuantizeConfig:
    g: int = 8
    M: int = 2
    K: int = 256
    init: str = 'oaem'
    damp_factor: float = 0.01
    kmeans_max_iters: int = 25
    beam: BeamConfig = field(default_factory=BeamConfig)
    oaem: OaemConfig = field(default_factory=OaemConfig)


@dataclass
class OracleReport:
    beam_codes: np.ndarray
    beam_costs: np.ndarray
    oracle_codes: np.ndarray
    oracle_costs: np.ndarray

    @property
    def excess(self):
        return self.beam_costs - self.oracle_costs

    @property
    def matched_fraction(self):
        if not len(self.beam_costs):
            return 1.0
        return float(np.mean(self.beam_costs == self.oracle_costs))

    @property
    def worst_excess(self):
        return float(np.max(self.excess)) if len(self.excess) else 0.0

    @property
    def mean_excess(self):
        return float(np.mean(self.excess)) if len(self.excess) else 0.0


@dataclass(frozen=True)
class RunManifest:
    """
    Everything needed to reproduce one command's outputs; threads are not part of it.
    """

    command: str
    config: Dict
    seed: Optional[int]
    version: str
    inputs: Dict[str, Dict[str, str]] = field(default_factory=dict)

    def to_json(self):
        return canonical_json(asdict(self))

    def write(self, path):
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write(self.to_json())
            handle.write('\n')
