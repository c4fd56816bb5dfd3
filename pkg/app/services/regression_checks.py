"""Regression suite against the published matrices, gains and tables.

HARD checks decide the exit code; SOFT checks only report mismatches.
"""
import logging
import time
from typing import Callable, List, Optional

import numpy as np
import pandas as pd

from ..constants.app_constants import CaseId, CheckSeverity, ControlConstants, ControllerId
from ..core import numkit
from ..models.config_models import WorkbenchConfig
from ..models.report_models import CheckResult, VerifyReport
from ..models.synthesis_models import ConnectionParams, Topology
from . import ac_feeder, cbscd, clf_bcd, dc_control, sim_engine

logger = logging.getLogger(__name__)

WORKED_EXAMPLE_CP = "2121"     # bwc=2, cc=1, cnc=2, prc=1
DELAY_HORIZON = 0.2            # s
DELAY_ORACLE_DT = 1e-5
DELAY_VALIDITY = 0.05
DC_BUS_BAND = 0.4              # V, last DC_BUS_TAIL of every load segment
DC_BUS_TAIL = 0.1              # s
OBSERVER_BAND = 0.02           # relative
OBSERVER_SETTLE = 0.4          # s after each step
AOB_SSE_FRACTION = 0.0025
AUDIT_DECAY = 1e-6
X4REF_TOL = 0.3                # V
ANC_CASES = ("ch3-load", "ch3-temp", "ch3-irr", "ch3-rpv", "ch3-multi")
# SOFT results that are compared on the printed matrices only
PRINTED_FALLBACK = "printed-matrix fallback: the printed A/B/K do not reproduce this value"


class CheckSuite:
    def __init__(self):
        self.results: List[CheckResult] = []

    def add(self, name: str, severity: CheckSeverity, passed: bool, expected: Optional[float] = None,
            computed: Optional[float] = None, tolerance: Optional[float] = None, detail: str = ""):
        self.results.append(CheckResult(
            name=name, severity=severity, passed=bool(passed),
            expected=None if expected is None else float(expected),
            computed=None if computed is None else float(computed),
            tolerance=None if tolerance is None else float(tolerance), detail=detail,
        ))
        level = logging.INFO if passed else (logging.ERROR if severity is CheckSeverity.HARD else logging.WARNING)
        logger.log(level, f"[{severity.value}] {name}: {'ok' if passed else 'MISMATCH'} {detail}".rstrip())

    def near(self, name: str, severity: CheckSeverity, expected: float, computed: float, tol: float,
             detail: str = ""):
        self.add(name, severity, abs(computed - expected) <= tol, expected, computed, tol, detail)

    def guarded(self, name: str, severity: CheckSeverity, fn: Callable[[], None]):
        """Run ``fn``; an exception becomes a failed check instead of aborting the suite."""
        try:
            fn()
        except Exception as e:
            logger.error(f"Check {name} error: {str(e)}")
            self.add(name, severity, False, detail=f"{type(e).__name__}: {e}")

    def report(self) -> VerifyReport:
        hard = [r for r in self.results if r.severity is CheckSeverity.HARD]
        return VerifyReport(
            checks=self.results,
            hard_total=len(hard),
            hard_failed=sum(not r.passed for r in hard),
            soft_mismatches=sum(not r.passed for r in self.results if r.severity is CheckSeverity.SOFT),
        )


def _matrix(cfg: WorkbenchConfig, key: str) -> np.ndarray:
    return ac_feeder.resolve_matrix(f"published:{key}", cfg)


def _scalar(cfg: WorkbenchConfig, key: str) -> float:
    return float(cfg.published.scalars[key])


# ---------------------------------------------------------------- printed matrices


def check_feeder_rebuild(suite: CheckSuite, cfg: WorkbenchConfig):
    for feeder, key in (("nominal", "ch4_a1"), ("ch4-a1", "ch4_a1"), ("ch4-a2", "ch4_a2"),
                        ("ch5-a1", "ch5_a1"), ("ch5-a2", "ch5_a2")):
        built = ac_feeder.build_feeder(cfg.feeders[feeder]).a
        diff = float(np.max(np.abs(built - _matrix(cfg, key))))
        suite.add(f"feeder {feeder} rebuilds {key}", CheckSeverity.HARD, diff <= 0.5, 0.0, diff, 0.5)
    b_diff = float(np.max(np.abs(ac_feeder.build_feeder(cfg.feeders["ch5-a1"]).b - _matrix(cfg, "ch5_b1"))))
    suite.add("feeder ch5-a1 rebuilds ch5_b1", CheckSeverity.HARD, b_diff <= 0.5, 0.0, b_diff, 0.5)


def check_open_loop(suite: CheckSuite, cfg: WorkbenchConfig):
    for key, severity, tol in (("ch4_a1", CheckSeverity.HARD, 0.005), ("ch4_a2", CheckSeverity.HARD, 0.05),
                               ("ch5_a1", CheckSeverity.SOFT, 0.001), ("ch5_a2", CheckSeverity.SOFT, 0.01)):
        a = _matrix(cfg, key)
        qr = numkit.eig_general(a).max_real
        oracle = float(np.max(numkit.charpoly_roots(a).real))
        suite.add(f"{key} eigenvalues agree with the characteristic polynomial", CheckSeverity.HARD,
                  abs(qr - oracle) <= 1e-6 * max(1.0, abs(qr)), oracle, qr, 1e-6)
        suite.near(f"{key} open-loop max real part", severity, _scalar(cfg, f"{key}_max_eig"), qr, tol,
                   detail=PRINTED_FALLBACK if severity is CheckSeverity.SOFT else "")


def check_gain_norms(suite: CheckSuite, cfg: WorkbenchConfig):
    for key in ("ch4_k_load", "ch4_k_delay", "ch4_k_linkloss"):
        suite.near(f"‖{key}‖₂", CheckSeverity.HARD, _scalar(cfg, f"{key}_norm"),
                   numkit.spectral_norm(_matrix(cfg, key)), 0.001)


def check_closed_loops(suite: CheckSuite, cfg: WorkbenchConfig):
    b1 = ac_feeder.build_feeder(cfg.feeders["ch4-a1"]).b
    b2 = ac_feeder.build_feeder(cfg.feeders["ch4-a2"]).b
    for key in ("ch4_k_load", "ch4_k_delay", "ch4_k_linkloss"):
        k = _matrix(cfg, key)
        for zone, a_key, b in (("1", "ch4_a1", b1), ("2", "ch4_a2", b2)):
            got = numkit.eig_general(ac_feeder.closed_loop(_matrix(cfg, a_key), b, k)).max_real
            suite.add(f"{key} stabilizes zone {zone}", CheckSeverity.HARD, got < 0.0, computed=got)
            suite.near(f"{key} zone {zone} closed-loop max real part", CheckSeverity.SOFT,
                       _scalar(cfg, f"{key}_ak{zone}"), got, 0.15 if zone == "1" else 0.3)

    k = _matrix(cfg, "ch5_k_3303")
    for zone in ("1", "2"):
        got = numkit.eig_general(ac_feeder.closed_loop(_matrix(cfg, f"ch5_a{zone}"),
                                                       _matrix(cfg, f"ch5_b{zone}"), k)).max_real
        suite.add(f"ch5_k_3303 stabilizes zone {zone}", CheckSeverity.HARD, got < 0.0, computed=got)
        suite.near(f"ch5_k_3303 zone {zone} closed-loop max real part", CheckSeverity.SOFT,
                   _scalar(cfg, f"ch5_k_3303_ak{zone}"), got, 0.15 if zone == "1" else 0.3,
                   detail=PRINTED_FALLBACK)

    zeros = [(i, j) for i in range(4) for j in range(4) if k[i, j] == 0.0]
    expected = [tuple(p) for p in cfg.published.matrices.get("ch5_k_3303_zeros", [])]
    suite.add("ch5_k_3303 zero pattern", CheckSeverity.HARD, zeros == expected,
              detail=f"zeros at {zeros}")
    cp = ConnectionParams.from_code("3303")
    topo = Topology(links=k != 0.0, peripheral=cbscd.default_classification(4))
    enumerated = {t.key for t in cbscd.enumerate_topologies(4, 4, cp)}
    suite.add("ch5_k_3303 pattern is a CP 3303 topology", CheckSeverity.HARD,
              not cbscd.validate_topology(topo, cp) and topo.key in enumerated)


# ---------------------------------------------------------------- delay model


def check_delay_model(suite: CheckSuite, cfg: WorkbenchConfig):
    d1, d2 = _matrix(cfg, "d1"), _matrix(cfg, "d2")
    suite.add("D2 = 2·D1", CheckSeverity.HARD, bool(np.allclose(d2, 2.0 * d1, rtol=0, atol=1e-12)))

    system = ac_feeder.build_feeder(cfg.feeders["ch4-a2"])
    k = _matrix(cfg, "ch4_k_delay")
    same = np.array_equal(ac_feeder.delay_closed_loop(system.a, system.b, k, np.zeros_like(k)),
                          ac_feeder.closed_loop(system.a, system.b, k))
    suite.add("zero delay reduces to the plain closed loop", CheckSeverity.HARD, same)

    x0 = np.ones(system.n)
    a_bar = ac_feeder.delay_closed_loop(system.a, system.b, k, d2)
    _, approx = ac_feeder.simulate_linear(a_bar, x0, DELAY_HORIZON, DELAY_ORACLE_DT)
    _, oracle = ac_feeder.simulate_delay_oracle(system.a, system.b, k, d2, x0, DELAY_HORIZON, DELAY_ORACLE_DT)
    rel = float(np.max(np.abs(approx - oracle)) / max(np.max(np.abs(oracle)), 1e-300))
    suite.add("delay approximation tracks the delay-differential oracle", CheckSeverity.HARD,
              rel < DELAY_VALIDITY, 0.0, rel, DELAY_VALIDITY, detail=f"max delay {np.max(d2) * 1e3:g} ms")


# ---------------------------------------------------------------- connection design


def check_connection_design(suite: CheckSuite, cfg: WorkbenchConfig, quick: bool):
    cp = ConnectionParams.from_code(WORKED_EXAMPLE_CP)
    configs = cbscd.cost_configurations(4, 4, cp)
    has_1331 = (1, 3, 3, 1) in configs
    sortup = cbscd.cost_sortup((1, 3, 3, 1))
    suite.add("worked example yields cost 1331", CheckSeverity.HARD, has_1331,
              detail=f"{len(configs)} cost configurations")
    suite.add("worked example cost-sortup {1,1,3,3}, count 4", CheckSeverity.HARD,
              sortup == [1, 1, 3, 3] and len(sortup) == 4)

    mismatches = []
    sizes = [(1, 1), (2, 2)] if quick else [(ns, nc) for ns in range(1, 4) for nc in range(1, 4)]
    for ns, nc in sizes:
        for code in ("1101", "1111", "2121", "2202", "2212", "1203", "2303", "3303"):
            p = ConnectionParams.from_code(code)
            got = [t.key for t in cbscd.enumerate_topologies(ns, nc, p)]
            want = [t.key for t in cbscd.brute_force_topologies(ns, nc, p)]
            if got != want:
                mismatches.append(f"{ns}x{nc}/{code}")
    suite.add("enumeration equals brute-force oracle", CheckSeverity.HARD, not mismatches,
              detail=", ".join(mismatches))

    rows = cbscd.rows_from_table(cfg.published.step7_table)
    chosen = cbscd.select_minimal_cp(rows, 0.1)
    reversed_pick = cbscd.select_minimal_cp(list(reversed(rows)), 0.1)
    suite.add("selection on the published table picks 3303", CheckSeverity.HARD,
              chosen.cp.code == "3303" and reversed_pick.cp.code == "3303", detail=f"picked {chosen.cp.code}")


# ---------------------------------------------------------------- integrator / determinism


def check_integrator(suite: CheckSuite):
    def error(dt: float) -> float:
        trace = sim_engine.integrate_rk4(lambda t, x, u: [-x[0]], None, [1.0], dt, 1.0)
        return abs(float(trace.frame["x1"].iloc[-1]) - float(np.exp(-1.0)))

    ratio = error(0.1) / error(0.05)
    suite.add("RK4 global error ratio when halving dt", CheckSeverity.HARD, 14.0 <= ratio <= 18.0,
              16.0, ratio, 2.0)


def check_determinism(suite: CheckSuite, cfg: WorkbenchConfig):
    a, b = _matrix(cfg, "ch5_a1"), _matrix(cfg, "ch5_b1")
    topo = Topology(links=_matrix(cfg, "ch5_k_3303") != 0.0, peripheral=cbscd.default_classification(4))
    first = cbscd.design_for_topology(a, b, topo, rho=10.0, iters=50)
    second = cbscd.design_for_topology(a, b, topo, rho=10.0, iters=50)
    suite.add("structured synthesis is deterministic", CheckSeverity.HARD,
              first.k.tobytes() == second.k.tobytes() and first.gamma == second.gamma)


# ---------------------------------------------------------------- synthesis runs


def check_synthesis(suite: CheckSuite, cfg: WorkbenchConfig):
    problem = clf_bcd.build_clf_problem("ch4-load", cfg)
    sol = clf_bcd.bcd_no_delay(problem)
    cert = sol.certificate
    recomputed = clf_bcd.check_clf(sol.k, sol.p2, problem.a1, problem.a2, problem.b, sol.gamma,
                                   mask=problem.mask, comm_tol=cert.commutation_tol)
    suite.add("ch4-load certificate recomputes identically", CheckSeverity.HARD,
              recomputed == cert and cert.hurwitz and cert.mask_respected
              and cert.k_norm <= problem.rho + 1e-6)
    suite.add("ch4-load LMI certificates negative definite", CheckSeverity.HARD, cert.passed,
              detail=f"lmi1={cert.lmi1_max:.3g} lmi2={cert.lmi2_max:.3g}")
    trace = sol.gamma_trace
    stopped = len(trace) >= 2 and abs(trace[-1] - trace[-2]) <= 1e-6
    suite.add("ch4-load γ trace meets the stop rule or the outer cap", CheckSeverity.HARD,
              stopped or sol.iterations == problem.max_outer)
    suite.add("ch4-load max real(A_K1) ≤ -2.0", CheckSeverity.SOFT, cert.max_real_1 <= -2.0,
              _scalar(cfg, "ch4_k_load_ak1"), cert.max_real_1)
    suite.add("ch4-load max real(A_K2) ≤ -20", CheckSeverity.SOFT, cert.max_real_2 <= -20.0,
              _scalar(cfg, "ch4_k_load_ak2"), cert.max_real_2)

    a, b = _matrix(cfg, "ch5_a1"), _matrix(cfg, "ch5_b1")
    cp = ConnectionParams.from_code("3303")
    rho = cfg.cbscd_problems["ch5-a1"].rho
    best = None
    for topo in cbscd.maximal_topologies(cbscd.enumerate_topologies(4, 4, cp), cp):
        d = cbscd.design_for_topology(a, b, topo, rho=rho, iters=cfg.cbscd_problems["ch5-a1"].subgrad_iters)
        suite.add(f"CP 3303 gain respects topology {topo.cost_string}", CheckSeverity.HARD,
                  bool(np.all(d.k[~topo.links] == 0.0)) and numkit.spectral_norm(d.k) <= rho + 1e-6)
        if best is None or d.gamma > best.gamma:
            best = d
    suite.add("CP 3303 γ ≥ 3.5", CheckSeverity.SOFT, best.gamma >= 3.5, 4.302, best.gamma,
              detail=PRINTED_FALLBACK)
    suite.add("CP 3303 closed-loop max real ≤ -3.5", CheckSeverity.SOFT, best.max_eig <= -3.5, -4.44, best.max_eig,
              detail=PRINTED_FALLBACK)


# ---------------------------------------------------------------- DC-side properties


def check_secondary_refs(suite: CheckSuite, cfg: WorkbenchConfig):
    scenario = cfg.scenarios[CaseId.CH2_LOAD.value]
    segments = sim_engine.build_segments(CaseId.CH2_LOAD, scenario, cfg, cfg.simulation.dt)
    for step, seg in zip(scenario.steps, segments):
        if step.x4ref_printed is None:
            continue
        suite.near(f"ch2-load x4ref at {seg.load_ohm:g} Ω", CheckSeverity.HARD, step.x4ref_printed,
                   seg.refs.x4, X4REF_TOL)


def _segment_windows(frame: pd.DataFrame, segments: List[sim_engine.Segment]):
    for seg in segments:
        yield seg, frame[(frame["t"] >= seg.t_start) & (frame["t"] < seg.t_end)]


def _tail_error(frame: pd.DataFrame, bus_ref: float) -> float:
    tail = frame[frame["t"] >= frame["t"].iloc[-1] - DC_BUS_TAIL]
    return abs(float(tail["x9"].mean()) - bus_ref)


def check_aob_tracking(suite: CheckSuite, cfg: WorkbenchConfig):
    bus_ref = cfg.simulation.bus_ref
    scenario = cfg.scenarios[CaseId.CH2_LOAD.value]
    segments = sim_engine.build_segments(CaseId.CH2_LOAD, scenario, cfg, cfg.simulation.dt)
    trace, _ = sim_engine.run_case_suite(CaseId.CH2_LOAD.value, ControllerId.AOB.value, cfg)
    frame = trace.frame

    worst_bus = 0.0
    worst_obs = {i: 0.0 for i in range(1, 5)}
    for seg, window in _segment_windows(frame, segments):
        tail = window[window["t"] >= seg.t_end - DC_BUS_TAIL]
        worst_bus = max(worst_bus, float(np.max(np.abs(tail["x9"] - bus_ref))))
        settled = window[window["t"] >= seg.t_start + OBSERVER_SETTLE]
        for i in worst_obs:
            truth = settled[f"d{i}_true"].to_numpy()
            rel = np.abs(settled[f"d{i}_hat"].to_numpy() - truth) / np.abs(truth)
            worst_obs[i] = max(worst_obs[i], float(np.max(rel)))
    suite.add("AOB bus voltage within 0.4 V before every load step", CheckSeverity.HARD,
              worst_bus <= DC_BUS_BAND, 0.0, worst_bus, DC_BUS_BAND)
    for i, worst in worst_obs.items():
        suite.add(f"AOB d̂{i} within 2% from 0.4 s after every step", CheckSeverity.HARD,
                  worst <= OBSERVER_BAND, 0.0, worst, OBSERVER_BAND)

    bs_trace, _ = sim_engine.run_case_suite(CaseId.CH2_LOAD.value, ControllerId.BASELINE_BS.value, cfg)
    bs_err, aob_err = _tail_error(bs_trace.frame, bus_ref), _tail_error(frame, bus_ref)
    suite.add("baseline degrades after the knowledge horizon while AOB holds", CheckSeverity.HARD,
              bs_err > aob_err and aob_err <= AOB_SSE_FRACTION * bus_ref,
              AOB_SSE_FRACTION * bus_ref, aob_err, detail=f"bs={bs_err:.4g} V, aob={aob_err:.4g} V")


def _mean_settling(metrics: List[sim_engine.Metrics], channel: str) -> Optional[float]:
    values = [m.settling_ms for m in metrics if m.channel == channel and m.settled]
    return float(np.mean(values)) if values else None


def check_anc(suite: CheckSuite, cfg: WorkbenchConfig):
    bus_ref = cfg.simulation.bus_ref
    lo, hi = ControlConstants.ANC_DUTY_MIN, ControlConstants.ANC_DUTY_MAX
    for case in ANC_CASES:
        trace, metrics = sim_engine.run_case_suite(case, ControllerId.ANC.value, cfg)
        frame = trace.frame
        duties = frame[["u1", "u2"]].to_numpy()
        thetas = frame[[f"theta{i + 1}" for i in range(6)]].to_numpy()
        suite.add(f"{case} ANC duties stay in [0.1, 0.9]", CheckSeverity.HARD,
                  bool(np.all((duties >= lo - 1e-12) & (duties <= hi + 1e-12))))
        suite.add(f"{case} ANC θ̂ stays non-negative", CheckSeverity.HARD, bool(np.all(thetas >= 0.0)),
                  computed=float(thetas.min()))

        # printed law: u1 = num/(e2 - e3) with num ≥ 0 and e3 ≈ i_mpp at rest, so u1 sits on the floor
        floor_share = float(np.mean(frame["u1"].to_numpy() <= lo + 1e-12))
        sse = max(m.sse for m in metrics if m.channel == "x6")
        suite.add(f"{case} ANC bus SSE within 0.25%", CheckSeverity.SOFT, sse <= AOB_SSE_FRACTION * bus_ref,
                  0.0, sse, AOB_SSE_FRACTION * bus_ref,
                  detail=f"u1 on the {lo:g} floor for {100.0 * floor_share:.0f}% of samples")

        _, bs_metrics = sim_engine.run_case_suite(case, ControllerId.BASELINE_BS.value, cfg)
        anc_settle, bs_settle = _mean_settling(metrics, "x6"), _mean_settling(bs_metrics, "x6")
        suite.add(f"{case} ANC settles faster than BS", CheckSeverity.SOFT,
                  anc_settle is not None and bs_settle is not None and anc_settle < bs_settle,
                  bs_settle, anc_settle, detail=f"anc={anc_settle} ms, bs={bs_settle} ms")

        if case == ANC_CASES[0]:
            params = cfg.dc_params
            b = np.concatenate([frame["x2"].to_numpy() / params.l_pv, frame["x5"].to_numpy() / params.l_b])
            bounds = dc_control.anc_uub_bounds(cfg.anc, thetas.max(axis=0), float(b.min()), float(b.max()))
            tail = frame[frame["t"] >= frame["t"].iloc[-1] - DC_BUS_TAIL]
            e6_sq = float(np.mean((tail["x6"] - tail["x6_ref"]) ** 2))
            suite.add(f"{case} ANC tail e₆² within the ultimate bound", CheckSeverity.SOFT,
                      e6_sq <= bounds[5], bounds[5], e6_sq)


def check_lyapunov_audit(suite: CheckSuite, cfg: WorkbenchConfig):
    v = sim_engine.lyapunov_audit(cfg).frame["V"].to_numpy()
    suite.add("AOB Lyapunov value decays on the exact model", CheckSeverity.HARD,
              v[-1] <= AUDIT_DECAY * v[0], AUDIT_DECAY * v[0], v[-1], detail=f"V(0)={v[0]:.3e}")
    rises = np.diff(v) - AUDIT_DECAY * v[:-1]
    worst = float(np.max(rises)) if rises.size else 0.0
    suite.add("AOB Lyapunov value never rises between steps", CheckSeverity.SOFT, worst <= 0.0,
              0.0, worst, detail=f"{int(np.sum(rises > 0.0))} rising steps of {rises.size}")


def check_dc(suite: CheckSuite, cfg: WorkbenchConfig):
    suite.guarded("aob tracking", CheckSeverity.HARD, lambda: check_aob_tracking(suite, cfg))
    suite.guarded("anc cases", CheckSeverity.HARD, lambda: check_anc(suite, cfg))
    suite.guarded("lyapunov audit", CheckSeverity.HARD, lambda: check_lyapunov_audit(suite, cfg))


def run_checks(cfg: WorkbenchConfig, quick: bool = False, dc: bool = False) -> VerifyReport:
    """Full runs always include the DC checks; ``quick`` skips them unless ``dc`` is set."""
    start_time = time.time()
    logger.info(f"Starting regression suite (quick={quick}, dc={dc})")
    suite = CheckSuite()
    suite.guarded("feeder rebuild", CheckSeverity.HARD, lambda: check_feeder_rebuild(suite, cfg))
    suite.guarded("open-loop spectra", CheckSeverity.HARD, lambda: check_open_loop(suite, cfg))
    suite.guarded("gain norms", CheckSeverity.HARD, lambda: check_gain_norms(suite, cfg))
    suite.guarded("closed loops", CheckSeverity.HARD, lambda: check_closed_loops(suite, cfg))
    suite.guarded("delay model", CheckSeverity.HARD, lambda: check_delay_model(suite, cfg))
    suite.guarded("connection design", CheckSeverity.HARD, lambda: check_connection_design(suite, cfg, quick))
    suite.guarded("integrator", CheckSeverity.HARD, lambda: check_integrator(suite))
    suite.guarded("determinism", CheckSeverity.HARD, lambda: check_determinism(suite, cfg))
    suite.guarded("secondary references", CheckSeverity.HARD, lambda: check_secondary_refs(suite, cfg))
    if not quick:
        suite.guarded("synthesis", CheckSeverity.HARD, lambda: check_synthesis(suite, cfg))
    if dc or not quick:
        check_dc(suite, cfg)
    report = suite.report()
    logger.info(f"Finished regression suite in {time.time() - start_time:.2f}s: "
                f"{report.hard_total - report.hard_failed}/{report.hard_total} hard checks passed, "
                f"{report.soft_mismatches} soft mismatches")
    return report
