import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..constants.app_constants import CaseId, ControllerId, PlantKind, SimConstants
from ..core.exceptions import ConfigError, SimulationAbortedError
from ..models.config_models import ScenarioConfig, WorkbenchConfig
from ..models.plant_models import (
    AncState, AobState, Atmosphere, HESS_STATES, HessDisturbance, PVBAT_STATES,
    PvBatDisturbance, PvBatObserverState, RefSet
)
from . import dc_control, dc_plant

logger = logging.getLogger(__name__)

StepController = Callable[[int, float, List[float]], Tuple[Sequence[float], Dict[str, float]]]
Derivative = Callable[[float, List[float], Sequence[float]], Sequence[float]]


@dataclass
class Trace:
    frame: pd.DataFrame
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.frame["t"].to_numpy()


@dataclass(frozen=True)
class Metrics:
    channel: str
    t_start: float
    t_end: float
    rise_ms: Optional[float]
    settling_ms: Optional[float]
    sse: float
    overshoot_pct: float
    settled: bool


# ---------------------------------------------------------------- integrator


def integrate_rk4(derivative: Derivative, controller: Optional[StepController], x0: Sequence[float],
                  dt: float, duration: float, state_names: Optional[List[str]] = None,
                  stride: int = 1, after_step: Optional[Callable[[int, float, List[float], Sequence[float]], None]] = None
                  ) -> Trace:
    """Fixed-step RK4 with the controller output held over each step."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_steps = int(round(duration / dt))
    n = len(x0)
    names = state_names or [f"x{i + 1}" for i in range(n)]
    x = [float(v) for v in x0]
    stride = max(1, int(stride))

    n_rows = n_steps // stride + 1
    buffer: Optional[np.ndarray] = None
    row = 0
    extra_names: Optional[List[str]] = None
    h = dt
    last_good = 0.0
    u: Sequence[float] = ()
    extras: Dict[str, float] = {}
    for k in range(n_steps + 1):
        t = k * dt
        if controller is not None:
            u, extras = controller(k, t, x)
        if k % stride == 0:
            if buffer is None:
                extra_names = list(extras.keys())
                buffer = np.empty((n_rows, 1 + n + len(extra_names)))
            buffer[row, 0] = t
            buffer[row, 1:n + 1] = x
            buffer[row, n + 1:] = [extras[name] for name in extra_names]
            row += 1
        if k == n_steps:
            break
        k1 = derivative(t, x, u)
        xa = [xi + 0.5 * h * ki for xi, ki in zip(x, k1)]
        k2 = derivative(t + 0.5 * h, xa, u)
        xb = [xi + 0.5 * h * ki for xi, ki in zip(x, k2)]
        k3 = derivative(t + 0.5 * h, xb, u)
        xc = [xi + h * ki for xi, ki in zip(x, k3)]
        k4 = derivative(t + h, xc, u)
        x_new = [xi + h / 6.0 * (a + 2.0 * b + 2.0 * c + d)
                 for xi, a, b, c, d in zip(x, k1, k2, k3, k4)]
        if not all(math.isfinite(v) for v in x_new):
            raise SimulationAbortedError(last_good)
        x = x_new
        last_good = t + h
        if after_step is not None:
            after_step(k, t + h, x, u)

    columns = ["t"] + names + (extra_names or [])
    frame = pd.DataFrame(buffer[:row], columns=columns)
    return Trace(frame=frame, meta={"dt": dt, "duration": duration, "stride": stride})


# ---------------------------------------------------------------- metrics


def compute_metrics(trace: Trace, channel: str, ref: float, segment: Tuple[float, float],
                    band: float = SimConstants.SETTLING_BAND) -> Metrics:
    t0, t1 = segment
    frame = trace.frame
    mask = (frame["t"] >= t0 - 1e-12) & (frame["t"] < t1 - 1e-12)
    if not mask.any():
        raise ValueError(f"segment {segment} outside trace")
    t = frame.loc[mask, "t"].to_numpy() - t0
    y = frame.loc[mask, channel].to_numpy()

    y0 = y[0]
    span = ref - y0
    has_step = abs(span) > 1e-9 * max(1.0, abs(ref))
    scale = abs(span) if has_step else abs(ref)
    tol = band * scale if scale > 0 else band

    rise_ms = None
    if has_step:
        s = np.sign(span)
        prog = s * (y - y0) / abs(span)
        lo_idx = np.nonzero(prog >= SimConstants.RISE_LOW)[0]
        hi_idx = np.nonzero(prog >= SimConstants.RISE_HIGH)[0]
        if lo_idx.size and hi_idx.size:
            rise_ms = 1000.0 * (t[hi_idx[0]] - t[lo_idx[0]])

    outside = np.nonzero(np.abs(y - ref) > tol)[0]
    if outside.size == 0:
        settling_ms, settled = 0.0, True
    elif outside[-1] == len(y) - 1:
        settling_ms, settled = None, False
    else:
        settling_ms, settled = 1000.0 * t[outside[-1] + 1], True

    tail = max(1, int(math.ceil(SimConstants.SSE_TAIL * len(y))))
    sse = abs(float(np.mean(y[-tail:])) - ref)

    if has_step:
        excursion = np.max(np.sign(span) * (y - ref))
    else:
        excursion = np.max(np.abs(y - ref))
    overshoot = 100.0 * max(0.0, float(excursion)) / scale if scale > 0 else 0.0
    return Metrics(channel=channel, t_start=t0, t_end=t1, rise_ms=rise_ms, settling_ms=settling_ms,
                   sse=sse, overshoot_pct=overshoot, settled=settled)


def metrics_frame(metrics: List[Metrics]) -> pd.DataFrame:
    return pd.DataFrame([m.__dict__ for m in metrics],
                        columns=["channel", "t_start", "t_end", "rise_ms", "settling_ms", "sse",
                                 "overshoot_pct", "settled"])


# ---------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class Segment:
    index: int
    t_start: float
    t_end: float
    k_start: int
    atmos: Atmosphere
    load_ohm: float
    r_pv: float
    x1ref: float
    refs: RefSet


def snap(t: float, dt: float) -> int:
    return int(round(t / dt))


def build_segments(case: CaseId, scenario: ScenarioConfig, cfg: WorkbenchConfig, dt: float) -> List[Segment]:
    params = cfg.dc_params
    current: Dict[str, float] = {"load_ohm": 0.0, "temperature_c": 25.0, "irradiance": 1000.0,
                                 "r_pv": params.r_pv}
    segments: List[Segment] = []
    steps = scenario.steps
    for i, step in enumerate(steps):
        for key in ("load_ohm", "temperature_c", "irradiance", "r_pv"):
            value = getattr(step, key)
            if value is not None:
                current[key] = value
        atmos = Atmosphere(irradiance=current["irradiance"], temperature=current["temperature_c"])
        seg_params = params.model_copy(update={"r_pv": current["r_pv"]})
        if step.x1ref is not None:
            x1ref = step.x1ref
        elif segments and steps[i].temperature_c is None and steps[i].irradiance is None:
            x1ref = segments[-1].x1ref
        else:
            x1ref = dc_plant.mpp_point(atmos, cfg.pv_cell)[0]
        i_mpp = dc_plant.pv_current(x1ref, atmos, cfg.pv_cell)
        bus = cfg.simulation.bus_ref
        if case.plant is PlantKind.HESS:
            refs = dc_control.secondary_refs_hess(bus, x1ref, i_mpp, params.v_b, current["load_ohm"], seg_params)
        else:
            refs = dc_control.secondary_refs_pvbat(bus, x1ref, i_mpp, params.v_b, current["load_ohm"], seg_params)
        t_end = steps[i + 1].t if i + 1 < len(steps) else scenario.duration
        segments.append(Segment(index=i, t_start=step.t, t_end=t_end, k_start=snap(step.t, dt), atmos=atmos,
                                load_ohm=current["load_ohm"], r_pv=current["r_pv"], x1ref=x1ref, refs=refs))
    return segments


class SegmentClock:
    """Maps a step index to its active scenario segment."""

    def __init__(self, segments: List[Segment]):
        self.segments = segments
        self.starts = [s.k_start for s in segments]

    def at(self, k: int) -> Segment:
        idx = 0
        for i, start in enumerate(self.starts):
            if k >= start:
                idx = i
        return self.segments[idx]


def resolve_controller(case: CaseId, controller: ControllerId) -> None:
    if case.plant is PlantKind.HESS and controller is ControllerId.ANC:
        raise ConfigError(f"controller '{controller.value}' runs on the 6-state plant only; "
                          f"valid for {case.value}: baseline-bs, aob")


def _hess_run(case: CaseId, controller: ControllerId, segments: List[Segment], cfg: WorkbenchConfig,
              dt: float, duration: float, stride: int) -> Trace:
    params = cfg.dc_params
    clock = SegmentClock(segments)
    horizon_k = snap(cfg.simulation.knowledge_horizon, dt)
    curves = {s.index: dc_plant.pv_curve(s.atmos, cfg.pv_cell) for s in segments}
    seg_params = {s.index: params.model_copy(update={"r_pv": s.r_pv}) for s in segments}

    s0 = segments[0]
    d1_0 = curves[0].current(s0.refs.x1)
    u_c = params.u_c0
    d0 = HessDisturbance(d1=d1_0, d2=params.v_b, d3=u_c, d4=1.0 / s0.load_ohm)
    x0, _ = dc_plant.hess_equilibrium(s0.refs, d0, params)
    st = AobState(d1_hat=d0.d1, d2_hat=d0.d2, d3_hat=d0.d3, d4_hat=d0.d4)
    bs_state: Optional[AobState] = None

    known_params = seg_params[clock.at(max(horizon_k - 1, 0)).index]
    box: Dict[str, Any] = {"u_c": u_c, "seg": s0, "i_guess": d1_0, "frozen": None, "d3": u_c}

    def measured(k: int, x: List[float]) -> HessDisturbance:
        # past the horizon the last measurement is all the baseline knows
        if k >= horizon_k and box["frozen"] is not None:
            return box["frozen"]
        seg = clock.at(k)
        box["frozen"] = HessDisturbance(d1=curves[seg.index].current(x[0], box["i_guess"]), d2=params.v_b,
                                        d3=box["d3"], d4=1.0 / seg.load_ohm)
        return box["frozen"]

    def control(k: int, t: float, x: List[float]):
        nonlocal st, bs_state
        seg = clock.at(k)
        box["seg"] = seg
        box["d3"] = box["u_c"] + x[6] * params.r_s_sc
        ctrl_params = seg_params[seg.index] if k < horizon_k else known_params
        if controller is ControllerId.AOB:
            u, st = dc_control.aob_step(x, seg.refs, st, cfg.aob_gains, ctrl_params, dt)
            extras = {"d1_hat": st.d1_hat, "d2_hat": st.d2_hat, "d3_hat": st.d3_hat, "d4_hat": st.d4_hat}
        else:
            d_meas = measured(k, x)
            u, bs_state = dc_control.baseline_bs_step(x, seg.refs, d_meas, cfg.aob_gains, ctrl_params, dt, bs_state)
            extras = {"d1_hat": d_meas.d1, "d2_hat": d_meas.d2, "d3_hat": d_meas.d3, "d4_hat": d_meas.d4}
        extras.update({"u1": u[0], "u2": u[1], "u3": u[2], "x1_ref": seg.refs.x1, "x4_ref": seg.refs.x4,
                       "x9_ref": seg.refs.x9, "u_c": box["u_c"],
                       "d1_true": curves[seg.index].current(x[0], box["i_guess"]), "d2_true": params.v_b,
                       "d3_true": box["d3"], "d4_true": 1.0 / seg.load_ohm})
        return u, extras

    def deriv(t: float, x: List[float], u: Sequence[float]):
        seg = box["seg"]
        i_pv = curves[seg.index].current(x[0], box["i_guess"])
        d = (i_pv, params.v_b, box["d3"], 1.0 / seg.load_ohm)
        return dc_plant.hess_rates(x, u, d, seg_params[seg.index])

    def after(k: int, t: float, x: List[float], u):
        seg = box["seg"]
        box["i_guess"] = curves[seg.index].current(x[0], box["i_guess"])
        box["u_c"], _ = dc_plant.supercap_step(box["u_c"], x[6], params, dt)

    return integrate_rk4(deriv, control, x0, dt, duration, state_names=list(HESS_STATES),
                         stride=stride, after_step=after)


# state offsets (x1, x4, x9) applied to the equilibrium before a decrease audit
AUDIT_OFFSETS: Dict[int, float] = {0: 0.1, 3: 0.02, 8: 0.01}


def lyapunov_audit(cfg: WorkbenchConfig, duration: float = 5.0, dt: Optional[float] = None,
                   offsets: Optional[Dict[int, float]] = None) -> Trace:
    """AOB on the exact 9-state model with constant disturbances and matched parameters.

    Starts from the first ch2-load operating point shifted by ``offsets`` with the
    observers at the true disturbances; column ``V`` holds the composite Lyapunov
    value before each control update.
    """
    params = cfg.dc_params
    dt = dt or cfg.simulation.dt
    seg = build_segments(CaseId.CH2_LOAD, cfg.scenarios[CaseId.CH2_LOAD.value], cfg, dt)[0]
    d = HessDisturbance(d1=seg.refs.x3, d2=params.v_b, d3=params.u_c0, d4=1.0 / seg.load_ohm)
    x0, _ = dc_plant.hess_equilibrium(seg.refs, d, params)
    for idx, delta in (AUDIT_OFFSETS if offsets is None else offsets).items():
        x0[idx] += delta
    st = AobState(d1_hat=d.d1, d2_hat=d.d2, d3_hat=d.d3, d4_hat=d.d4)
    d_tuple = (d.d1, d.d2, d.d3, d.d4)

    def control(k: int, t: float, x: List[float]):
        nonlocal st
        v = dc_control.aob_lyapunov(x, seg.refs, st, d, cfg.aob_gains, params)
        u, st = dc_control.aob_step(x, seg.refs, st, cfg.aob_gains, params, dt)
        return u, {"V": v, "u1": u[0], "u2": u[1], "u3": u[2]}

    def deriv(t: float, x: List[float], u: Sequence[float]):
        return dc_plant.hess_rates(x, u, d_tuple, params)

    logger.info(f"Starting Lyapunov audit ({duration:g}s, dt={dt:g})")
    return integrate_rk4(deriv, control, x0, dt, duration, state_names=list(HESS_STATES))


def _pvbat_run(case: CaseId, controller: ControllerId, segments: List[Segment], cfg: WorkbenchConfig,
               dt: float, duration: float, stride: int) -> Trace:
    params = cfg.dc_params
    clock = SegmentClock(segments)
    horizon_k = snap(cfg.simulation.knowledge_horizon, dt)
    curves = {s.index: dc_plant.pv_curve(s.atmos, cfg.pv_cell) for s in segments}
    seg_params = {s.index: params.model_copy(update={"r_pv": s.r_pv}) for s in segments}
    layers = dc_control.build_anc_layers(cfg.anc)
    known_params = seg_params[clock.at(max(horizon_k - 1, 0)).index]

    s0 = segments[0]
    x0, _ = dc_plant.pvbat_equilibrium(s0.refs, params)
    D_true0 = PvBatDisturbance(D1=curves[0].current(s0.refs.x1) / params.c_pvi, D2=params.v_b / params.l_b,
                               D3=1.0 / (params.c_l * s0.load_ohm))
    obs = PvBatObserverState(D1_hat=D_true0.D1, D2_hat=D_true0.D2, D3_hat=D_true0.D3)
    anc = AncState()
    box: Dict[str, Any] = {"seg": s0, "i_guess": D_true0.D1 * params.c_pvi, "frozen": None}

    def true_D(seg: Segment, x: List[float]) -> PvBatDisturbance:
        i_pv = curves[seg.index].current(x[0], box["i_guess"])
        return PvBatDisturbance(D1=i_pv / params.c_pvi, D2=params.v_b / params.l_b,
                                D3=1.0 / (params.c_l * seg.load_ohm))

    def control(k: int, t: float, x: List[float]):
        nonlocal obs, anc
        seg = clock.at(k)
        box["seg"] = seg
        extras: Dict[str, float] = {}
        ctrl_params = seg_params[seg.index] if k < horizon_k else known_params
        if controller is ControllerId.ANC:
            u, anc = dc_control.anc_step(x, seg.refs, anc, cfg.anc, layers, dt)
            extras.update({f"theta{i + 1}": float(v) for i, v in enumerate(anc.theta)})
        elif controller is ControllerId.AOB:
            u, obs = dc_control.abs_pvbat_step(x, seg.refs, obs, cfg.pvbat_gains, ctrl_params, dt)
            extras.update({"D1_hat": obs.D1_hat, "D2_hat": obs.D2_hat, "D3_hat": obs.D3_hat})
        else:
            if k < horizon_k or box["frozen"] is None:
                box["frozen"] = true_D(seg, x)
            D_meas = box["frozen"]
            u = dc_control.bs_pvbat_step(x, seg.refs, D_meas, cfg.pvbat_gains, ctrl_params)
            extras.update({"D1_hat": D_meas.D1, "D2_hat": D_meas.D2, "D3_hat": D_meas.D3})
        extras.update({"u1": u[0], "u2": u[1], "x1_ref": seg.refs.x1, "x4_ref": seg.refs.x4,
                       "x6_ref": seg.refs.x6})
        return u, extras

    def deriv(t: float, x: List[float], u: Sequence[float]):
        seg = box["seg"]
        D = true_D(seg, x)
        return dc_plant.pvbat_rates(x, u, (D.D1, D.D2, D.D3), seg_params[seg.index])

    def after(k: int, t: float, x: List[float], u):
        box["i_guess"] = curves[box["seg"].index].current(x[0], box["i_guess"])

    return integrate_rk4(deriv, control, x0, dt, duration, state_names=list(PVBAT_STATES),
                         stride=stride, after_step=after)


def output_channels(case: CaseId) -> List[Tuple[str, str]]:
    if case.plant is PlantKind.HESS:
        return [("x1", "x1_ref"), ("x4", "x4_ref"), ("x9", "x9_ref")]
    return [("x1", "x1_ref"), ("x6", "x6_ref")]


def case_metrics(case: CaseId, trace: Trace, segments: List[Segment]) -> List[Metrics]:
    out: List[Metrics] = []
    for channel, ref_col in output_channels(case):
        for seg in segments:
            ref = float(getattr(seg.refs, channel))
            out.append(compute_metrics(trace, channel, ref, (seg.t_start, seg.t_end)))
    return out


def run_case_suite(case_id: str, controller_id: str, cfg: WorkbenchConfig, dt: Optional[float] = None,
                   duration: Optional[float] = None, stride: int = 1) -> Tuple[Trace, List[Metrics]]:
    try:
        case = CaseId(case_id)
    except ValueError:
        raise ConfigError(f"unknown case '{case_id}'; valid: {', '.join(c.value for c in CaseId)}")
    try:
        controller = ControllerId(controller_id)
    except ValueError:
        raise ConfigError(f"unknown controller '{controller_id}'; valid: "
                          f"{', '.join(c.value for c in ControllerId)}")
    resolve_controller(case, controller)
    if case.value not in cfg.scenarios:
        raise ConfigError(f"case '{case.value}' has no scenario in the configuration")

    scenario = cfg.scenarios[case.value]
    dt = dt or cfg.simulation.dt
    duration = min(duration, scenario.duration) if duration else scenario.duration
    segments = [s for s in build_segments(case, scenario, cfg, dt) if s.t_start < duration]
    segments[-1] = replace(segments[-1], t_end=min(segments[-1].t_end, duration))

    logger.info(f"Starting {case.value}/{controller.value} (dt={dt:g}, {duration:g}s)")
    start_time = time.time()
    if case.plant is PlantKind.HESS:
        trace = _hess_run(case, controller, segments, cfg, dt, duration, stride)
    else:
        trace = _pvbat_run(case, controller, segments, cfg, dt, duration, stride)
    trace.meta.update({"case": case.value, "controller": controller.value, "seed": cfg.seed})
    metrics = case_metrics(case, trace, segments)
    logger.info(f"Finished {case.value}/{controller.value} in {time.time() - start_time:.2f}s")
    return trace, metrics
