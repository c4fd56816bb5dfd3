from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from ..constants.app_constants import NumConstants, SynthesisConstants

# (value, gradient w.r.t. K)
Penalty = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass
class SpectralSubproblem:
    """λmax(F0 + Σ (L K R + (L K R)ᵀ)) over K in the ρ-ball with a fixed zero pattern."""
    f0: np.ndarray
    terms: List[Tuple[np.ndarray, np.ndarray]]   # (L, R) pairs
    mask: np.ndarray                              # 1.0 = free entry, 0.0 = structural zero
    rho: float
    penalty: Optional[Penalty] = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape

    def block(self, k: np.ndarray) -> np.ndarray:
        out = self.f0.copy()
        for left, right in self.terms:
            m = left @ k @ right
            out += m + m.T
        return out


@dataclass
class ClfProblem:
    a1: np.ndarray
    a2: np.ndarray
    b: np.ndarray
    rho: float = SynthesisConstants.DEFAULT_RHO
    beta: float = SynthesisConstants.DEFAULT_BETA
    p0: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None
    alpha1: float = 0.0
    alpha2: float = 0.0
    commutation_weight: float = 1e-4
    commutation_tol_rel: float = 1e-2
    subgrad_iters: int = SynthesisConstants.SUBGRAD_ITERS
    max_outer: int = SynthesisConstants.MAX_OUTER
    name: str = "problem"

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        n = self.a1.shape[0]
        if self.p0 is None:
            self.p0 = np.eye(n)
        if self.mask is None:
            self.mask = np.ones((self.b.shape[1], n))

    @property
    def is_delay(self) -> bool:
        return self.alpha1 > 0.0 or self.alpha2 > 0.0


@dataclass
class ClfCertificate:
    gamma: float
    lmi1_max: float              # λmax(A_K1ᵀP + PA_K1 + γI)
    lmi2_max: float              # λmax(A_K2ᵀP + PA_K2)
    max_real_1: float
    max_real_2: float
    k_norm: float
    commutation_residual: float
    commutation_tol: float
    mask_respected: bool
    block1_max: Optional[float] = None
    block2_max: Optional[float] = None
    p_bar_min: Optional[float] = None

    @property
    def hurwitz(self) -> bool:
        return self.max_real_1 < 0.0 and self.max_real_2 < 0.0

    @property
    def passed(self) -> bool:
        """Every condition holds with the negative-definiteness margin, not just the sign."""
        margin = NumConstants.NEG_DEF_MARGIN
        ok = self.lmi1_max <= -margin and self.lmi2_max <= -margin and self.hurwitz and self.mask_respected
        for extra in (self.block1_max, self.block2_max):
            if extra is not None:
                ok = ok and extra <= -margin
        if self.p_bar_min is not None:
            ok = ok and self.p_bar_min >= margin
        return ok


@dataclass
class ClfSolution:
    k: np.ndarray
    p2: np.ndarray
    gamma: float
    certificate: ClfCertificate
    p1: Optional[np.ndarray] = None
    gamma1: Optional[float] = None
    gamma2: Optional[float] = None
    gamma_trace: List[float] = field(default_factory=list)
    iterations: int = 0
    beta: float = 0.0
    p_step_feasible: bool = True


@dataclass(frozen=True)
class ConnectionParams:
    bwc: int
    cc: int
    cnc: int
    prc: int

    def __post_init__(self):
        for name in ("bwc", "cc", "cnc", "prc"):
            v = getattr(self, name)
            if not 0 <= v <= 9:
                raise ValueError(f"{name} must be a digit, got {v}")

    @property
    def code(self) -> str:
        return f"{self.bwc}{self.cc}{self.cnc}{self.prc}"

    @property
    def digit_sum(self) -> int:
        return self.bwc + self.cc + self.cnc + self.prc

    @classmethod
    def from_code(cls, code: str) -> "ConnectionParams":
        if len(code) != 4 or not code.isdigit():
            raise ValueError(f"connection parameter must be 4 digits, got '{code}'")
        return cls(*(int(c) for c in code))


@dataclass(frozen=True)
class Topology:
    """links[i, j] is True when sensor j feeds controller i (the K[i, j] position)."""
    links: np.ndarray
    peripheral: Tuple[bool, ...]

    @property
    def nc(self) -> int:
        return self.links.shape[0]

    @property
    def ns(self) -> int:
        return self.links.shape[1]

    @property
    def costs(self) -> Tuple[int, ...]:
        return tuple(int(v) for v in self.links.sum(axis=1))

    @property
    def cost_string(self) -> str:
        return "".join(str(c) for c in self.costs)

    @property
    def key(self) -> Tuple[int, ...]:
        return tuple(int(v) for v in self.links.astype(int).ravel())

    def mask(self) -> np.ndarray:
        return self.links.astype(float)


@dataclass
class TopologyDesign:
    k: np.ndarray
    gamma: float                 # > 0 certifies the topology
    max_eig: float               # max real part of A + BK
    delay_weight: Optional[float] = None


@dataclass
class CandidateRow:
    """One row of the candidate table; topology is None for rows read from a printed table."""
    cp: ConnectionParams
    gamma: float
    max_eig: float
    topology: Optional[Topology] = None
    k: Optional[np.ndarray] = None
    index: int = 0

    @property
    def certifying(self) -> bool:
        return self.gamma > 0.0
