import math

import numpy as np
import pandas as pd
import pytest

from app.constants.app_constants import CaseId
from app.core.exceptions import ConfigError, SimulationAbortedError
from app.services import sim_engine
from app.services.sim_engine import Trace


def _decay_error(dt: float) -> float:
    trace = sim_engine.integrate_rk4(lambda t, x, u: [-x[0]], None, [1.0], dt, 1.0)
    return abs(float(trace.frame["x1"].iloc[-1]) - math.exp(-1.0))


def test_rk4_is_fourth_order():
    ratio = _decay_error(0.1) / _decay_error(0.05)
    assert 14.0 <= ratio <= 18.0


def test_rk4_rejects_bad_step():
    with pytest.raises(ValueError):
        sim_engine.integrate_rk4(lambda t, x, u: [0.0], None, [0.0], 0.0, 1.0)


def test_rk4_aborts_on_blow_up():
    with pytest.raises(SimulationAbortedError) as err:
        sim_engine.integrate_rk4(lambda t, x, u: [x[0] * x[0]], None, [1e200], 0.1, 1.0)
    assert err.value.last_good_time == 0.0


def test_controller_output_held_and_logged():
    calls = []

    def controller(k, t, x):
        calls.append(k)
        return [1.0], {"u": 1.0}

    trace = sim_engine.integrate_rk4(lambda t, x, u: [u[0]], controller, [0.0], 0.01, 0.1, stride=2)
    assert calls == list(range(11))
    assert list(trace.frame.columns) == ["t", "x1", "u"]
    assert len(trace.frame) == 6
    assert float(trace.frame["x1"].iloc[-1]) == pytest.approx(0.1)


def _first_order_trace(tau: float = 0.05, dt: float = 1e-4) -> Trace:
    t = np.arange(0.0, 1.0, dt)
    return Trace(frame=pd.DataFrame({"t": t, "y": 1.0 - np.exp(-t / tau)}))


def test_metrics_first_order_step():
    m = sim_engine.compute_metrics(_first_order_trace(), "y", 1.0, (0.0, 1.0))
    assert m.rise_ms == pytest.approx(1000.0 * 0.05 * math.log(9.0), abs=0.2)
    assert m.settling_ms == pytest.approx(1000.0 * 0.05 * math.log(50.0), abs=0.2)
    assert m.overshoot_pct == 0.0
    assert m.sse < 1e-6
    assert m.settled


def test_metrics_overshoot():
    t = np.arange(0.0, 1.0, 1e-3)
    y = 1.0 - np.exp(-5.0 * t) * np.cos(20.0 * t)
    m = sim_engine.compute_metrics(Trace(frame=pd.DataFrame({"t": t, "y": y})), "y", 1.0, (0.0, 1.0))
    assert m.overshoot_pct > 10.0


def test_metrics_unsettled_channel():
    t = np.arange(0.0, 1.0, 1e-3)
    m = sim_engine.compute_metrics(Trace(frame=pd.DataFrame({"t": t, "y": t})), "y", 5.0, (0.0, 1.0))
    assert not m.settled
    assert m.settling_ms is None


def test_metrics_segment_outside_trace():
    with pytest.raises(ValueError):
        sim_engine.compute_metrics(_first_order_trace(), "y", 1.0, (2.0, 3.0))


def test_segments_follow_scenario(cfg):
    scenario = cfg.scenarios["ch2-temp"]
    segments = sim_engine.build_segments(CaseId.CH2_TEMP, scenario, cfg, cfg.simulation.dt)
    assert [s.t_start for s in segments] == [0.0, 1.0, 2.0, 3.0, 4.0]
    assert segments[-1].t_end == scenario.duration
    assert [s.atmos.temperature for s in segments] == [75.0, 50.0, 25.0, 10.0, 0.0]
    assert all(s.refs.x9 == cfg.simulation.bus_ref for s in segments)
    clock = sim_engine.SegmentClock(segments)
    assert clock.at(0).index == 0
    assert clock.at(sim_engine.snap(1.5, cfg.simulation.dt)).index == 1


def test_load_step_keeps_pv_reference(cfg):
    scenario = cfg.scenarios["ch3-load"]
    segments = sim_engine.build_segments(CaseId.CH3_LOAD, scenario, cfg, cfg.simulation.dt)
    assert len({s.x1ref for s in segments}) == 1
    assert [s.load_ohm for s in segments] == [6.0, 9.0, 12.0]


def test_unknown_case_or_controller(cfg):
    with pytest.raises(ConfigError):
        sim_engine.run_case_suite("ch9-load", "aob", cfg)
    with pytest.raises(ConfigError):
        sim_engine.run_case_suite("ch2-load", "pid", cfg)


def test_neural_controller_rejected_on_hess(cfg):
    with pytest.raises(ConfigError):
        sim_engine.run_case_suite("ch2-load", "anc", cfg)


def test_pvbat_baseline_holds_equilibrium(cfg):
    trace, metrics = sim_engine.run_case_suite("ch3-load", "baseline-bs", cfg, duration=0.01)
    frame = trace.frame
    assert frame["t"].iloc[-1] == pytest.approx(0.01)
    assert float(np.max(np.abs(frame["x6"] - cfg.simulation.bus_ref))) < 0.01
    assert {m.channel for m in metrics} == {"x1", "x6"}
    assert trace.meta["case"] == "ch3-load"


def test_hess_run_is_finite_and_bounded(cfg):
    trace, metrics = sim_engine.run_case_suite("ch2-load", "aob", cfg, duration=0.005)
    frame = trace.frame
    assert np.all(np.isfinite(frame.to_numpy()))
    duties = frame[["u1", "u2", "u3"]].to_numpy()
    assert np.all((duties >= 0.02) & (duties <= 0.98))
    assert {m.channel for m in metrics} == {"x1", "x4", "x9"}


def test_runs_are_reproducible(cfg):
    first, _ = sim_engine.run_case_suite("ch3-load", "aob", cfg, duration=0.005)
    second, _ = sim_engine.run_case_suite("ch3-load", "aob", cfg, duration=0.005)
    pd.testing.assert_frame_equal(first.frame, second.frame)


def test_suite_traces_keep_every_step(cfg):
    trace, _ = sim_engine.run_case_suite("ch3-load", "baseline-bs", cfg, duration=0.002)
    dt = cfg.simulation.dt
    t = trace.frame["t"].to_numpy()
    assert trace.meta["stride"] == 1
    assert len(t) == int(round(0.002 / dt)) + 1
    assert np.allclose(np.diff(t), dt)


def test_hess_trace_logs_true_disturbances(cfg):
    trace, _ = sim_engine.run_case_suite("ch2-load", "aob", cfg, duration=0.002)
    for i in range(1, 5):
        assert f"d{i}_true" in trace.frame
    assert trace.frame["d4_true"].iloc[0] == pytest.approx(1.0 / cfg.scenarios["ch2-load"].steps[0].load_ohm)


def test_lyapunov_audit_starts_off_equilibrium(cfg):
    frame = sim_engine.lyapunov_audit(cfg, duration=0.01).frame
    v = frame["V"].to_numpy()
    assert v[0] > 0.0
    assert np.all(v >= 0.0)
    assert v[-1] < v[0]


@pytest.mark.slow
def test_lyapunov_audit_decays(cfg):
    v = sim_engine.lyapunov_audit(cfg).frame["V"].to_numpy()
    assert v[-1] <= 1e-6 * v[0]
