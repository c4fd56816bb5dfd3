from enum import Enum, IntEnum
from typing import Final
import os
from functools import lru_cache


@lru_cache()
def get_env_path(key: str, default: str) -> str:
    value = os.environ.get(key)
    if value is None or not value.strip():
        return default
    return value


class EnvKey(Enum):
    CONFIG = 'WORKBENCH_CONFIG'
    OUTPUT_DIR = 'WORKBENCH_OUTPUT_DIR'


class CaseId(Enum):
    CH2_LOAD = 'ch2-load'
    CH2_TEMP = 'ch2-temp'
    CH2_IRR = 'ch2-irr'
    CH3_LOAD = 'ch3-load'
    CH3_TEMP = 'ch3-temp'
    CH3_IRR = 'ch3-irr'
    CH3_RPV = 'ch3-rpv'
    CH3_MULTI = 'ch3-multi'

    @property
    def plant(self) -> 'PlantKind':
        return PlantKind.HESS if self.value.startswith('ch2') else PlantKind.PVBAT


class PlantKind(Enum):
    HESS = 'hess'      # 9-state PV/battery/supercap
    PVBAT = 'pvbat'    # 6-state PV/battery


class ControllerId(Enum):
    BASELINE_BS = 'baseline-bs'
    AOB = 'aob'
    ANC = 'anc'


class ExitCode(IntEnum):
    OK = 0
    CONFIG_ERROR = 1
    RUNTIME_FAULT = 2
    SYNTHESIS_INFEASIBLE = 3


class CheckSeverity(Enum):
    HARD = 'hard'
    SOFT = 'soft'


def get_values(enum_class) -> list:
    return [e.value for e in enum_class]


class SimConstants:
    DEFAULT_DT: Final[float] = 2e-5          # 20 us
    KNOWLEDGE_HORIZON: Final[float] = 1.5    # s
    BUS_REF: Final[float] = 40.0             # V
    DEFAULT_SEED: Final[int] = 42
    SETTLING_BAND: Final[float] = 0.02       # 2%
    SSE_TAIL: Final[float] = 0.10            # last 10%
    RISE_LOW: Final[float] = 0.10
    RISE_HIGH: Final[float] = 0.90


class ControlConstants:
    AOB_DUTY_MIN: Final[float] = 0.02
    AOB_DUTY_MAX: Final[float] = 0.98
    ANC_DUTY_MIN: Final[float] = 0.1
    ANC_DUTY_MAX: Final[float] = 0.9
    EPS_DEN: Final[float] = 1e-3
    ALPHA_FILTER_STEPS: Final[float] = 10.0  # tau = 10*dt


class NumConstants:
    NEG_DEF_MARGIN: Final[float] = 1e-9
    SYM_TOL: Final[float] = 1e-10
    LYAP_RESIDUAL: Final[float] = 1e-8
    EIG_SUM_TOL: Final[float] = 1e-12
    MAX_DIM: Final[int] = 64
    PV_TOL: Final[float] = 1e-9              # A
    PV_MAX_NEWTON: Final[int] = 100


class SynthesisConstants:
    DEFAULT_RHO: Final[float] = 5.0
    DEFAULT_BETA: Final[float] = 2.0
    BETA_STEP: Final[float] = 0.5
    BETA_RETRIES: Final[int] = 10
    GAMMA_TOL: Final[float] = 1e-6
    MAX_OUTER: Final[int] = 50
    SUBGRAD_ITERS: Final[int] = 2000
    NORM_SLACK: Final[float] = 1e-9
    DEFAULT_EPSILON: Final[float] = 0.1
    GAMMA_MAX: Final[float] = 1e4
    GAMMA_MIN: Final[float] = 1e-8
    GAMMA_GRID_PER_DECADE: Final[int] = 4
