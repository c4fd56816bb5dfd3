import argparse
import logging
import os
import sys
import time
from typing import List, Optional

from pydantic import ValidationError

from .constants.app_constants import CaseId, ControllerId, ExitCode, PlantKind, get_values
from .core.config_manager import ConfigManager
from .core.exceptions import ConfigError, WorkbenchError
from .core.metrics import RunMetrics
from .models.config_models import CpRange, WorkbenchConfig
from .models.report_models import MetricRecord, SimReport, SolutionRecord
from .services import cbscd, clf_bcd, regression_checks, sim_engine
from .utils import formatters, plotting
from .workers.suite_worker import run_cases_sync
from .workers.topology_worker import make_mapper

# 로깅 설정
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------- argument helpers


def _expand(value: str, valid: List[str]) -> List[str]:
    if value == "all":
        return list(valid)
    items = [v.strip() for v in value.split(",") if v.strip()]
    for item in items:
        if item not in valid:
            raise ConfigError(f"unknown id '{item}'; valid: {', '.join(valid)}")
    return items


def parse_cp_range(text: str) -> CpRange:
    """``bwc=2-4,cc=2-3,cnc=0-3,prc=1-4``; omitted keys keep their defaults."""
    values = CpRange().model_dump()
    for part in text.split(","):
        try:
            key, span = part.split("=")
            lo, _, hi = span.partition("-")
            values[key.strip()] = [int(lo), int(hi or lo)]
        except ValueError:
            raise ConfigError(f"bad --cp-range entry '{part}'; expected name=lo-hi")
        if key.strip() not in ("bwc", "cc", "cnc", "prc"):
            raise ConfigError(f"unknown CP digit '{key}'; valid: bwc, cc, cnc, prc")
    try:
        return CpRange.model_validate(values)
    except ValidationError as e:
        raise ConfigError(f"bad --cp-range: {e.errors()[0]['msg']}")


# ---------------------------------------------------------------- commands


def cmd_sim_dc(args, cfg: WorkbenchConfig) -> int:
    cases = _expand(args.case, get_values(CaseId))
    controllers = _expand(args.controller, get_values(ControllerId))
    jobs = []
    for case in cases:
        for controller in controllers:
            if args.controller == "all" and CaseId(case).plant is PlantKind.HESS and controller == ControllerId.ANC.value:
                continue
            sim_engine.resolve_controller(CaseId(case), ControllerId(controller))
            jobs.append((case, controller))

    for case, controller, trace, metrics in run_cases_sync(jobs, cfg, dt=args.dt, duration=args.duration):
        stem = os.path.join(cfg.output_dir, f"{case}_{controller}")
        meta = {"case": case, "controller": controller, "dt": trace.meta["dt"], "seed": cfg.seed,
                "duration": trace.meta["duration"]}
        formatters.write_csv(trace.frame, f"{stem}_trace.csv", meta)
        frame = sim_engine.metrics_frame(metrics)
        formatters.write_csv(frame, f"{stem}_metrics.csv")
        report = SimReport(case=case, controller=controller, plant=CaseId(case).plant.value,
                           dt=trace.meta["dt"], duration=trace.meta["duration"], samples=len(trace.frame),
                           metrics=[MetricRecord(**m.__dict__) for m in metrics])
        formatters.write_json(report, f"{stem}_report.json")
        if args.plot:
            duty_cols = [c for c in ("u1", "u2", "u3") if c in trace.frame]
            # <output>/<controller>/<case>_<channel>.svg
            plotting.plot_case(trace, case, sim_engine.output_channels(CaseId(case)),
                               duty_cols, os.path.join(cfg.output_dir, controller))
        print(f"== {case} / {controller}")
        print(formatters.format_metrics_table(frame))
    return ExitCode.OK


def cmd_design_clf(args, cfg: WorkbenchConfig) -> int:
    problem = clf_bcd.build_clf_problem(args.problem, cfg, delay=args.delay, rho=args.rho)
    solution = clf_bcd.bcd_delay(problem) if args.delay else clf_bcd.bcd_no_delay(problem)
    RunMetrics().synthesis_iterations.labels(problem=problem.name).inc(solution.iterations)
    record = SolutionRecord.from_solution(problem, solution)
    suffix = "_delay" if args.delay else ""
    path = formatters.write_json(record, os.path.join(cfg.output_dir, f"{problem.name}{suffix}_solution.json"))
    if args.plot:
        plotting.plot_gamma_trace(solution.gamma_trace, os.path.join(cfg.output_dir, f"{problem.name}{suffix}_gamma.svg"),
                                  f"{problem.name} γ")

    cert = solution.certificate
    print(f"== {problem.name}{' (delay)' if args.delay else ''}")
    print(formatters.format_matrix(solution.k))
    print(f"gamma={solution.gamma:.6g} ‖K‖={cert.k_norm:.4f} "
          f"max real: {cert.max_real_1:.4f} / {cert.max_real_2:.4f} iterations={solution.iterations}")
    if not solution.p_step_feasible:
        print("delay grid found no strictly feasible point; the certificate still holds with margin")
    print(f"certificates pass; wrote {path}")
    return ExitCode.OK


def cmd_design_cbscd(args, cfg: WorkbenchConfig) -> int:
    cp_range = parse_cp_range(args.cp_range) if args.cp_range else None
    outcome = cbscd.design_cbscd(args.feeder, cfg, epsilon=args.epsilon, cp_range=cp_range, delay=args.delay,
                                 mapper=make_mapper(cfg.max_workers))
    report = cbscd.design_report(outcome)
    suffix = "_delay" if args.delay else ""
    path = formatters.write_json(report, os.path.join(cfg.output_dir, f"{args.feeder}{suffix}_cbscd.json"))
    print(cbscd.format_step7_table(outcome.table))
    print(f"chosen CP {report.chosen_cp}: gamma={report.gamma:.4f} max eig={report.max_eig:.4f}")
    print(formatters.format_matrix(outcome.chosen.k))
    print(f"wrote {path}")
    return ExitCode.OK


def cmd_verify(args, cfg: WorkbenchConfig) -> int:
    report = regression_checks.run_checks(cfg, quick=args.quick, dc=args.dc)
    if args.json:
        formatters.write_json(report, os.path.join(cfg.output_dir, "verify_report.json"))
    for line in formatters.format_check_lines(report.checks):
        print(line)
    print(f"{report.hard_total - report.hard_failed}/{report.hard_total} hard checks passed, "
          f"{report.soft_mismatches} soft mismatches")
    return ExitCode.OK if report.ok else ExitCode.RUNTIME_FAULT


COMMANDS = {
    "sim-dc": cmd_sim_dc,
    "design-clf": cmd_design_clf,
    "design-cbscd": cmd_design_cbscd,
    "verify-paper": cmd_verify,
}


def _global_options(parser: argparse.ArgumentParser, default) -> None:
    parser.add_argument("--config", default=default, help="configuration file (default: config/workbench.json)")
    parser.add_argument("--output-dir", default=default, help="artifact directory")
    parser.add_argument("--workers", type=int, default=default, help="process pool size for batch runs")
    parser.add_argument("--verbose", action="store_true", default=False if default is None else default,
                        help="debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="workbench", description="DC/AC microgrid control workbench")
    _global_options(parser, None)
    # 서브커맨드 뒤에서도 같은 옵션 허용; SUPPRESS라 앞쪽 값을 덮어쓰지 않음
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim-dc", parents=[common], help="closed-loop DC microgrid simulation")
    p.add_argument("--case", required=True, help=f"case id, comma list or 'all' ({', '.join(get_values(CaseId))})")
    p.add_argument("--controller", required=True,
                   help=f"controller id, comma list or 'all' ({', '.join(get_values(ControllerId))})")
    p.add_argument("--dt", type=float)
    p.add_argument("--duration", type=float)
    p.add_argument("--plot", action="store_true")

    p = sub.add_parser("design-clf", parents=[common], help="common-Lyapunov state feedback for two feeder zones")
    p.add_argument("--problem", required=True)
    p.add_argument("--delay", action="store_true")
    p.add_argument("--rho", type=float)
    p.add_argument("--plot", action="store_true")

    p = sub.add_parser("design-cbscd", parents=[common], help="constraint-based sensor/controller connection design")
    p.add_argument("--feeder", required=True)
    p.add_argument("--cp-range")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delay", action="store_true")

    p = sub.add_parser("verify-paper", parents=[common], help="regression suite against the published values")
    p.add_argument("--json", action="store_true", help="write verify_report.json")
    p.add_argument("--quick", action="store_true", help="skip synthesis runs")
    p.add_argument("--dc", action="store_true", help="add the DC-side property checks")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return ExitCode.OK if e.code == 0 else ExitCode.CONFIG_ERROR
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    metrics = RunMetrics()
    start_time = time.time()
    status = "error"
    cfg: Optional[WorkbenchConfig] = None
    try:
        cfg = ConfigManager().load(args.config, args.output_dir, args.workers)
        code = COMMANDS[args.command](args, cfg)
        status = "ok" if code == ExitCode.OK else "failed"
        return int(code)
    except WorkbenchError as e:
        logger.error(f"{args.command} error: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return int(e.exit_code)
    except ValidationError as e:
        logger.error(f"{args.command} validation error: {str(e)}")
        print(f"error: {e.errors()[0]['msg']}", file=sys.stderr)
        return int(ExitCode.CONFIG_ERROR)
    finally:
        elapsed = time.time() - start_time
        metrics.observe(args.command, status, elapsed)
        if cfg is not None:
            try:
                metrics.write(cfg.output_dir)
            except OSError as e:
                logger.error(f"Metrics write error: {str(e)}")
                print(f"warning: metrics not written: {e}", file=sys.stderr)
        logger.info(f"Finished {args.command} in {elapsed:.2f}s ({status})")


if __name__ == "__main__":
    sys.exit(main())
