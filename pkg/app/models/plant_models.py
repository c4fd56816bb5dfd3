from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

HESS_STATES: List[str] = ["x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9"]
HESS_LABELS: List[str] = ["v_pvi", "v_pvo", "i_pv", "v_bi", "v_bo", "i_b", "i_sc", "v_sco", "v_dc"]
PVBAT_STATES: List[str] = ["x1", "x2", "x3", "x4", "x5", "x6"]
PVBAT_LABELS: List[str] = ["v_pvi", "v_pvo", "i_pv", "i_b", "v_bo", "v_dc"]


@dataclass(frozen=True)
class Atmosphere:
    irradiance: float     # W/m2
    temperature: float    # degC

    def __post_init__(self):
        if self.irradiance < 0:
            raise ValueError("irradiance must be >= 0")
        if not -40.0 <= self.temperature <= 90.0:
            raise ValueError("temperature must be within [-40, 90] degC")


@dataclass(frozen=True)
class HessDisturbance:
    d1: float   # I_pvi (A)
    d2: float   # V_b (V)
    d3: float   # V_s (V)
    d4: float   # 1/R_L (S)

    def as_array(self) -> np.ndarray:
        return np.array([self.d1, self.d2, self.d3, self.d4])


@dataclass(frozen=True)
class PvBatDisturbance:
    D1: float   # i_pvi / C_pvi
    D2: float   # V_b / L_b
    D3: float   # 1 / (C_L R_L)

    def as_array(self) -> np.ndarray:
        return np.array([self.D1, self.D2, self.D3])


@dataclass(frozen=True)
class RefSet:
    """Secondary references. Unused entries of the 6-state plant stay at 0."""
    x1: float
    x2: float
    x3: float
    x4: float
    x5: float
    x6: float
    x7: float = 0.0
    x8: float = 0.0
    x9: float = 0.0

    def as_array(self, n: int = 9) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3, self.x4, self.x5,
                         self.x6, self.x7, self.x8, self.x9][:n])


@dataclass
class AobState:
    d1_hat: float
    d2_hat: float
    d3_hat: float
    d4_hat: float
    prev_u1: float = 0.5
    prev_u2: float = 0.5
    u1_dot: float = 0.0
    u2_dot: float = 0.0
    alpha8_dot_prev: Optional[float] = None
    alpha8_ddot: float = 0.0

    def copy(self) -> "AobState":
        return replace(self)


@dataclass
class PvBatObserverState:
    D1_hat: float
    D2_hat: float
    D3_hat: float

    def copy(self) -> "PvBatObserverState":
        return replace(self)


@dataclass
class AncState:
    theta: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def copy(self) -> "AncState":
        return AncState(theta=self.theta.copy())


@dataclass(frozen=True)
class RbfLayer:
    centers: np.ndarray   # (nodes, dim)
    widths: np.ndarray    # (nodes,)
