from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..constants.app_constants import SimConstants, SynthesisConstants


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DcParams(StrictModel):
    c_pvi: float = Field(gt=0)
    c_pvo: float = Field(gt=0)
    c_bi: float = Field(gt=0)
    c_bo: float = Field(gt=0)
    c_sco: float = Field(gt=0)
    c_l: float = Field(gt=0)
    l_pv: float = Field(gt=0)
    l_b: float = Field(gt=0)
    l_sc: float = Field(gt=0)
    r_pv: float = Field(ge=0)
    r_pvo: float = Field(gt=0)
    r_bi: float = Field(gt=0)
    r_b: float = Field(ge=0)
    r_bo: float = Field(gt=0)
    r_sc: float = Field(ge=0)
    r_sco: float = Field(gt=0)
    c_sc: float = Field(gt=0)
    r_p: Optional[float] = Field(default=None, gt=0)  # None = 무한대 (no leakage)
    r_s_sc: float = Field(ge=0)
    u_c0: float = Field(gt=0)
    v_b: float = Field(gt=0)


class PvCell(StrictModel):
    n_p: float = Field(gt=0)
    n_s: float = Field(gt=0)
    ideality: float = Field(gt=0)
    i_sc: float = Field(gt=0)
    k_i: float
    i_s_ref: float = Field(gt=0)
    e_g: float = Field(gt=0)
    r_s: float = Field(ge=0)
    r_sh: float = Field(gt=0)
    t_ref_c: float = 25.0
    g_ref: float = Field(default=1000.0, gt=0)


class AobGains(StrictModel):
    k1: float = Field(gt=0)
    k2: float = Field(gt=0)
    k3: float = Field(gt=0)
    k4: float = Field(gt=0)
    k5: float = Field(gt=0)
    k6: float = Field(gt=0)
    k7: float = Field(gt=0)
    k8: float = Field(gt=0)
    k9: float = Field(gt=0)
    gamma1: float = Field(gt=0)
    gamma2: float = Field(gt=0)
    gamma3: float = Field(gt=0)
    gamma4: float = Field(gt=0)
    alpha8_form: Literal["compact", "derivation"] = "compact"
    d4_law: Literal["error", "printed"] = "error"


class PvBatGains(StrictModel):
    k1: float = Field(gt=0)
    k3: float = Field(gt=0)
    k4: float = Field(gt=0)
    k6: float = Field(gt=0)
    gamma1: float = Field(gt=0)
    gamma2: float = Field(gt=0)
    gamma3: float = Field(gt=0)


class AncConfig(StrictModel):
    nodes: int = Field(default=20, ge=1)
    width_factor: float = Field(default=1.5, gt=0)
    boxes: List[List[float]]
    eta: List[float]
    gamma: List[float]
    p: List[float]
    k: List[float]
    eps_den: float = Field(default=1e-3, gt=0)
    beta6_sign: Literal[-1, 1] = -1
    uub_a: float = Field(default=0.1, ge=0)
    uub_eps: float = Field(default=0.1, ge=0)

    @model_validator(mode="after")
    def check_lengths(self):
        for name in ("boxes", "eta", "gamma", "p", "k"):
            if len(getattr(self, name)) != 6:
                raise ValueError(f"anc.{name} needs one entry per network (6)")
        for name in ("eta", "gamma", "p", "k"):
            if any(v <= 0 for v in getattr(self, name)):
                raise ValueError(f"anc.{name} entries must be positive")
        for lo_hi in self.boxes:
            if len(lo_hi) != 2 or lo_hi[0] >= lo_hi[1]:
                raise ValueError("anc.boxes entries must be [lo, hi] with lo < hi")
        return self


class SimulationSettings(StrictModel):
    dt: float = Field(default=SimConstants.DEFAULT_DT, gt=0, le=1e-4)
    knowledge_horizon: float = Field(default=SimConstants.KNOWLEDGE_HORIZON, ge=0)
    bus_ref: float = Field(default=SimConstants.BUS_REF, gt=0)
    state_limit_factor: float = Field(default=10.0, gt=1)


class ScenarioStep(StrictModel):
    t: float = Field(ge=0)
    load_ohm: Optional[float] = Field(default=None, gt=0)
    temperature_c: Optional[float] = Field(default=None, ge=-40, le=90)
    irradiance: Optional[float] = Field(default=None, ge=0)
    r_pv: Optional[float] = Field(default=None, ge=0)
    x1ref: Optional[float] = None
    x4ref_printed: Optional[float] = None


class ScenarioConfig(StrictModel):
    duration: float = Field(gt=0)
    steps: List[ScenarioStep]

    @field_validator("steps")
    @classmethod
    def check_steps(cls, steps: List[ScenarioStep]) -> List[ScenarioStep]:
        if not steps or steps[0].t != 0.0:
            raise ValueError("the first scenario step must start at t=0")
        first = steps[0]
        if first.load_ohm is None or first.temperature_c is None or first.irradiance is None:
            raise ValueError("the t=0 step must define load_ohm, temperature_c and irradiance")
        times = [s.t for s in steps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("scenario breakpoints must be strictly increasing")
        return steps

    @model_validator(mode="after")
    def check_duration(self):
        if self.steps[-1].t > self.duration:
            raise ValueError("scenario breakpoint beyond duration")
        return self


class FeederConfig(StrictModel):
    r: List[float]
    l: List[float]
    l_c: List[float]
    r_load: float = Field(ge=0)
    l_load: float = Field(gt=0)

    @model_validator(mode="after")
    def check_shapes(self):
        n = len(self.r) + 1
        if n < 2:
            raise ValueError("feeder needs at least one line plus the load leg")
        if len(self.l) != n - 1 or len(self.l_c) != n:
            raise ValueError("feeder needs n-1 line R/L values and n coupling inductances")
        if any(v < 0 for v in self.r) or any(v <= 0 for v in self.l) or any(v <= 0 for v in self.l_c):
            raise ValueError("feeder needs R >= 0 and positive inductances")
        return self


class ClfProblemConfig(StrictModel):
    a1: str
    a2: str
    b: str
    rho: float = Field(default=SynthesisConstants.DEFAULT_RHO, gt=0)
    beta: float = Field(default=SynthesisConstants.DEFAULT_BETA, ge=0)
    p0_scale: float = Field(default=1.0, gt=0)
    sparsity: Optional[List[List[int]]] = None
    delay_1: Optional[str] = None
    delay_2: Optional[str] = None
    commutation_weight: float = Field(default=1e-4, ge=0)
    commutation_tol_rel: float = Field(default=1e-2, ge=0)
    subgrad_iters: int = Field(default=SynthesisConstants.SUBGRAD_ITERS, ge=1)
    max_outer: int = Field(default=SynthesisConstants.MAX_OUTER, ge=1)


class CpRange(StrictModel):
    bwc: List[int] = [2, 4]
    cc: List[int] = [2, 3]
    cnc: List[int] = [0, 3]
    prc: List[int] = [1, 4]

    @model_validator(mode="after")
    def check_ranges(self):
        for name in ("bwc", "cc", "cnc", "prc"):
            lo_hi = getattr(self, name)
            if len(lo_hi) != 2 or not (0 <= lo_hi[0] <= lo_hi[1] <= 9):
                raise ValueError(f"cp range {name} must be [lo, hi] digits")
        return self


class CbscdProblemConfig(StrictModel):
    a: str
    b: str
    rho: float = Field(default=5.0, gt=0)
    beta: float = Field(default=0.0, ge=0)
    epsilon: float = Field(default=0.1, gt=0)
    cp_range: CpRange = CpRange()
    peripheral: Optional[List[int]] = None
    delay: Optional[str] = None
    subgrad_iters: int = Field(default=600, ge=1)
    zones: List[str] = []


class PublishedReference(StrictModel):
    matrices: Dict[str, List[List[float]]]
    scalars: Dict[str, float]
    step7_table: List[List[float]]


class WorkbenchConfig(StrictModel):
    version: int = 1
    seed: int = SimConstants.DEFAULT_SEED
    max_workers: int = Field(default=1, ge=1)
    output_dir: str = "out"
    dc_params: DcParams
    pv_cell: PvCell
    aob_gains: AobGains
    pvbat_gains: PvBatGains
    anc: AncConfig
    simulation: SimulationSettings = SimulationSettings()
    scenarios: Dict[str, ScenarioConfig]
    feeders: Dict[str, FeederConfig]
    clf_problems: Dict[str, ClfProblemConfig]
    cbscd_problems: Dict[str, CbscdProblemConfig]
    published: PublishedReference
