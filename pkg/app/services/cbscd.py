"""Constraint-based sensor/controller connection design.

Topologies are grown controller by controller under the bandwidth (bwc), reach (cc),
central-cost (cnc) and peripheral-cost (prc) constraints; each surviving topology gets
a structured gain and the cheapest constraint set within the γ tolerance wins.
"""
import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..constants.app_constants import SynthesisConstants
from ..core import numkit
from ..core.exceptions import ConfigError, NumericalError, SynthesisInfeasibleError
from ..models.config_models import CpRange, WorkbenchConfig
from ..models.report_models import CandidateRecord, DesignReport
from ..models.synthesis_models import (
    CandidateRow, ConnectionParams, SpectralSubproblem, Topology, TopologyDesign
)
from .ac_feeder import alpha_bound, closed_loop, resolve_matrix
from .clf_bcd import minimize_lambda_max

logger = logging.getLogger(__name__)

GOLDEN_ITERS = 30
_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------- enumeration


def default_classification(nc: int) -> Tuple[bool, ...]:
    """First and last controllers sit on the feeder boundary."""
    return tuple(i == 0 or i == nc - 1 for i in range(nc))


def reach(i: int, ns: int, cc: int) -> List[int]:
    return [j for j in range(ns) if abs(i - j) <= cc]


def controller_costs(i: int, ns: int, cp: ConnectionParams, peripheral: bool) -> List[int]:
    r = len(reach(i, ns, cp.cc))
    if peripheral:
        return list(range(0, min(cp.prc, r) + 1))
    return sorted({0, *range(max(cp.cnc, 1), r + 1)})


def cost_configurations(ns: int, nc: int, cp: ConnectionParams,
                        classification: Optional[Sequence[bool]] = None) -> List[Tuple[int, ...]]:
    """Per-controller link counts whose total can still give every sensor bwc links."""
    cls = _classification(nc, classification)
    options = [controller_costs(i, ns, cp, cls[i]) for i in range(nc)]
    need = cp.bwc * ns
    return [c for c in itertools.product(*options) if sum(c) >= need]


def cost_sortup(costs: Sequence[int]) -> List[int]:
    return sorted(c for c in costs if c > 0)


def _classification(nc: int, classification: Optional[Sequence[bool]]) -> Tuple[bool, ...]:
    if classification is None:
        return default_classification(nc)
    if len(classification) != nc:
        raise ValueError(f"classification needs {nc} entries, got {len(classification)}")
    return tuple(bool(v) for v in classification)


def enumerate_topologies(ns: int, nc: int, cp: ConnectionParams,
                         classification: Optional[Sequence[bool]] = None) -> List[Topology]:
    if ns < 1 or nc < 1:
        raise ValueError("ns and nc must be >= 1")
    cls = _classification(nc, classification)
    found: Dict[Tuple[int, ...], Topology] = {}

    for costs in cost_configurations(ns, nc, cp, cls):
        # controllers joined in ascending cost order (the cost sort-up)
        order = sorted((i for i in range(nc) if costs[i] > 0), key=lambda i: (costs[i], i))
        count = len(order)
        choices = [list(itertools.combinations(reach(i, ns, cp.cc), costs[i])) for i in order]
        links = np.zeros((nc, ns), dtype=int)

        def join(t: int) -> None:
            if t == count:
                topo = Topology(links=links.astype(bool), peripheral=cls)
                found.setdefault(topo.key, topo)
                return
            ctrl = order[t]
            for sensors in choices[t]:
                links[ctrl, list(sensors)] = 1
                # after t+1 controllers every sensor needs bwc - (count - t - 1) links
                if np.all(links.sum(axis=0) >= cp.bwc - (count - t - 1)):
                    join(t + 1)
                links[ctrl, list(sensors)] = 0

        join(0)

    topologies = []
    for key in sorted(found):
        topo = found[key]
        problems = validate_topology(topo, cp)
        if problems:
            raise NumericalError(f"enumeration produced an invalid topology: {problems[0]}")
        topologies.append(topo)
    logger.debug(f"CP {cp.code}: {len(topologies)} topologies on {ns}x{nc}")
    return topologies


def validate_topology(topo: Topology, cp: ConnectionParams) -> List[str]:
    """Independent constraint check; empty list means valid."""
    problems = []
    for i in range(topo.nc):
        allowed = set(reach(i, topo.ns, cp.cc))
        for j in np.nonzero(topo.links[i])[0]:
            if int(j) not in allowed:
                problems.append(f"controller {i} links sensor {int(j)} beyond reach {cp.cc}")
        cost = int(topo.links[i].sum())
        if topo.peripheral[i] and cost > cp.prc:
            problems.append(f"peripheral controller {i} has {cost} links > prc {cp.prc}")
        if not topo.peripheral[i] and 0 < cost < cp.cnc:
            problems.append(f"central controller {i} has {cost} links < cnc {cp.cnc}")
    for j in range(topo.ns):
        got = int(topo.links[:, j].sum())
        if got < cp.bwc:
            problems.append(f"sensor {j} has {got} links < bwc {cp.bwc}")
    return problems


def brute_force_topologies(ns: int, nc: int, cp: ConnectionParams,
                           classification: Optional[Sequence[bool]] = None) -> List[Topology]:
    cls = _classification(nc, classification)
    out = []
    for bits in itertools.product((0, 1), repeat=ns * nc):
        topo = Topology(links=np.array(bits, dtype=bool).reshape(nc, ns), peripheral=cls)
        if not validate_topology(topo, cp):
            out.append(topo)
    return sorted(out, key=lambda t: t.key)


def _extensions(topo: Topology, cp: ConnectionParams):
    """Topologies adding links to a single controller row of ``topo``."""
    for i in range(topo.nc):
        row = topo.links[i]
        free = [j for j in reach(i, topo.ns, cp.cc) if not row[j]]
        size = 1 if (row.any() or topo.peripheral[i]) else max(cp.cnc, 1)
        for extra in itertools.combinations(free, size):
            links = topo.links.copy()
            links[i, list(extra)] = True
            yield Topology(links=links, peripheral=topo.peripheral)


def maximal_topologies(topologies: Sequence[Topology], cp: ConnectionParams) -> List[Topology]:
    """Topologies of the CP with no valid strict superset."""
    return [t for t in topologies if not any(not validate_topology(o, cp) for o in _extensions(t, cp))]


# ---------------------------------------------------------------- structured synthesis


def shifted_lyapunov(a: np.ndarray, beta: float) -> np.ndarray:
    """P with (A - βI)ᵀP + P(A - βI) = -I."""
    n = a.shape[0]
    p = numkit.solve_lyapunov(a - beta * np.eye(n), np.eye(n))
    if not numkit.is_positive_definite(p):
        raise NumericalError(f"shifted Lyapunov solution is not positive definite at beta={beta:g}")
    return p


def design_for_topology(a, b, topo: Topology, rho: float, beta: float = 0.0, alpha: float = 0.0,
                        iters: int = SynthesisConstants.SUBGRAD_ITERS,
                        p: Optional[np.ndarray] = None) -> TopologyDesign:
    a, b = numkit.as_matrix(a, "a"), numkit.as_matrix(b, "b")
    if topo.links.shape != (b.shape[1], a.shape[0]):
        raise ValueError(f"topology {topo.links.shape} does not fit K of shape {(b.shape[1], a.shape[0])}")
    p = shifted_lyapunov(a, beta) if p is None else p
    base = a.T @ p + p @ a
    terms = [(p @ b, np.eye(a.shape[0]))]
    mask = topo.mask()

    if alpha <= 0.0:
        sp = SpectralSubproblem(f0=base, terms=terms, mask=mask, rho=rho)
        k, lam = minimize_lambda_max(sp, np.zeros(mask.shape), iters)
        return TopologyDesign(k=k, gamma=-lam, max_eig=numkit.eig_general(closed_loop(a, b, k)).max_real)

    # Schur form of [[ĀᵀP + PĀ + wα²I, P], [P, -wI]] ≺ 0; the margin is unimodal in log w
    p_sq = p @ p
    eye = np.eye(a.shape[0])
    warm = {"k": np.zeros(mask.shape)}

    def margin(log_w: float) -> float:
        w = 10.0 ** log_w
        sp = SpectralSubproblem(f0=base + w * alpha ** 2 * eye + p_sq / w, terms=terms, mask=mask, rho=rho)
        k, lam = minimize_lambda_max(sp, warm["k"], iters)
        warm["k"] = k
        return lam

    lo, hi = np.log10(SynthesisConstants.GAMMA_MIN), np.log10(SynthesisConstants.GAMMA_MAX)
    x1, x2 = hi - _INV_PHI * (hi - lo), lo + _INV_PHI * (hi - lo)
    f1, f2 = margin(x1), margin(x2)
    for _ in range(GOLDEN_ITERS):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INV_PHI * (hi - lo)
            f1 = margin(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INV_PHI * (hi - lo)
            f2 = margin(x2)
    log_w = x1 if f1 <= f2 else x2
    w = 10.0 ** log_w
    sp = SpectralSubproblem(f0=base + w * alpha ** 2 * eye + p_sq / w, terms=terms, mask=mask, rho=rho)
    k, lam = minimize_lambda_max(sp, warm["k"], iters)
    return TopologyDesign(k=k, gamma=-lam, max_eig=numkit.eig_general(closed_loop(a, b, k)).max_real,
                          delay_weight=float(w))


# ---------------------------------------------------------------- selection


def best_per_cp(rows: Sequence[CandidateRow]) -> List[CandidateRow]:
    """One row per CP: highest γ, then lowest max eigenvalue."""
    groups: Dict[str, List[CandidateRow]] = {}
    for r in rows:
        groups.setdefault(r.cp.code, []).append(r)
    return [min(groups[code], key=lambda r: (-r.gamma, r.max_eig, r.index)) for code in sorted(groups)]


def select_minimal_cp(rows: Sequence[CandidateRow], epsilon: float = SynthesisConstants.DEFAULT_EPSILON) -> CandidateRow:
    if not rows:
        raise ValueError("candidate table is empty")
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    pool = [r for r in rows if r.certifying]
    if not pool:
        raise SynthesisInfeasibleError("no candidate topology certifies stability")

    best = max(r.gamma for r in pool)
    pool = [r for r in pool if r.gamma >= best - epsilon]
    low_bwc = min(r.cp.bwc for r in pool)
    pool = [r for r in pool if r.cp.bwc == low_bwc]
    low_cc = min(r.cp.cc for r in pool)
    pool = [r for r in pool if r.cp.cc == low_cc]
    code = min({r.cp.code for r in pool}, key=lambda c: (ConnectionParams.from_code(c).digit_sum, c))
    chosen = [r for r in pool if r.cp.code == code]
    return min(chosen, key=lambda r: (r.max_eig, r.index, r.topology.key if r.topology is not None else ()))


def rows_from_table(table: Sequence[Sequence[float]]) -> List[CandidateRow]:
    """Rows of [CP, max eig, γ] as printed."""
    rows = []
    for idx, entry in enumerate(table):
        if len(entry) != 3:
            raise ConfigError(f"table row {idx} needs [cp, max_eig, gamma], got {entry}")
        code = f"{int(entry[0]):04d}"
        rows.append(CandidateRow(cp=ConnectionParams.from_code(code), max_eig=float(entry[1]),
                                 gamma=float(entry[2]), index=idx))
    return rows


def format_step7_table(rows: Sequence[CandidateRow]) -> str:
    header = f"{'CP':>6} | {'max eig':>10} | {'γ':>8}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r.cp.code:>6} | {r.max_eig:>10.4f} | {r.gamma:>8.4f}")
    return "\n".join(lines)


def cp_grid(cp_range: CpRange) -> List[ConnectionParams]:
    spans = [range(lo, hi + 1) for lo, hi in (cp_range.bwc, cp_range.cc, cp_range.cnc, cp_range.prc)]
    return [ConnectionParams(*digits) for digits in itertools.product(*spans)]


# ---------------------------------------------------------------- orchestration

TopologyJob = Tuple[np.ndarray, np.ndarray, Topology, float, float, float, int, np.ndarray]
JobMapper = Callable[[List[TopologyJob]], List[TopologyDesign]]


def run_topology_job(job: TopologyJob) -> TopologyDesign:
    a, b, topo, rho, beta, alpha, iters, p = job
    return design_for_topology(a, b, topo, rho, beta=beta, alpha=alpha, iters=iters, p=p)


def sequential_mapper(jobs: List[TopologyJob]) -> List[TopologyDesign]:
    return [run_topology_job(job) for job in jobs]


@dataclass
class CbscdOutcome:
    problem: str
    chosen: CandidateRow
    table: List[CandidateRow]
    rows: List[CandidateRow]
    epsilon: float
    alpha: float
    open_loop_max_eig: float
    zone_max_eig: Dict[str, float] = field(default_factory=dict)


def design_cbscd(name: str, cfg: WorkbenchConfig, epsilon: Optional[float] = None,
                 cp_range: Optional[CpRange] = None, delay: bool = False,
                 maximal_only: bool = True, mapper: JobMapper = sequential_mapper) -> CbscdOutcome:
    if name not in cfg.cbscd_problems:
        raise ConfigError(f"unknown cbscd problem '{name}'; valid: {', '.join(sorted(cfg.cbscd_problems))}")
    pc = cfg.cbscd_problems[name]
    a = resolve_matrix(pc.a, cfg, "a")
    b = resolve_matrix(pc.b, cfg, "b")
    nc, ns = b.shape[1], a.shape[0]
    classification = None
    if pc.peripheral is not None:
        classification = [i in pc.peripheral for i in range(nc)]
    epsilon = pc.epsilon if epsilon is None else epsilon
    cp_range = pc.cp_range if cp_range is None else cp_range

    alpha = 0.0
    if delay:
        if pc.delay is None:
            raise ConfigError(f"cbscd problem '{name}' defines no delay matrix; drop --delay")
        alpha = alpha_bound(pc.rho, a, b, resolve_matrix(pc.delay, cfg))

    start_time = time.time()
    logger.info(f"Starting CBSCD design for {name} (alpha={alpha:.4g}, epsilon={epsilon:g})")
    p = shifted_lyapunov(a, pc.beta)

    per_cp: List[Tuple[ConnectionParams, List[Topology]]] = []
    unique: Dict[Tuple[int, ...], Topology] = {}
    for cp in cp_grid(cp_range):
        topologies = enumerate_topologies(ns, nc, cp, classification)
        if maximal_only:
            topologies = maximal_topologies(topologies, cp)
        per_cp.append((cp, topologies))
        for t in topologies:
            unique.setdefault(t.key, t)

    keys = sorted(unique)
    jobs = [(a, b, unique[key], pc.rho, pc.beta, alpha, pc.subgrad_iters, p) for key in keys]
    logger.info(f"{name}: {len(per_cp)} CPs, {len(jobs)} distinct topologies to design")
    designs = dict(zip(keys, mapper(jobs)))

    rows: List[CandidateRow] = []
    for cp, topologies in per_cp:
        for idx, topo in enumerate(topologies):
            d = designs[topo.key]
            rows.append(CandidateRow(cp=cp, gamma=d.gamma, max_eig=d.max_eig, topology=topo, k=d.k, index=idx))
    if not rows:
        raise SynthesisInfeasibleError(f"{name}: no topology satisfies any CP in range")

    chosen = select_minimal_cp(rows, epsilon)
    zone_max_eig = {pc.a: chosen.max_eig}
    for ref in pc.zones:
        zone_max_eig[ref] = numkit.eig_general(closed_loop(resolve_matrix(ref, cfg, "a"), b, chosen.k)).max_real

    outcome = CbscdOutcome(problem=name, chosen=chosen, table=best_per_cp(rows), rows=rows, epsilon=epsilon,
                           alpha=alpha, open_loop_max_eig=numkit.eig_general(a).max_real,
                           zone_max_eig=zone_max_eig)
    logger.info(f"Finished CBSCD {name} in {time.time() - start_time:.2f}s: CP {chosen.cp.code}, "
                f"gamma={chosen.gamma:.4f}, max eig={chosen.max_eig:.4f}")
    return outcome


def design_report(outcome: CbscdOutcome) -> DesignReport:
    chosen = outcome.chosen
    return DesignReport(
        problem=outcome.problem,
        epsilon=outcome.epsilon,
        alpha=outcome.alpha,
        open_loop_max_eig=outcome.open_loop_max_eig,
        chosen_cp=chosen.cp.code,
        chosen_links=chosen.topology.links.astype(int).tolist(),
        k=[[float(v) for v in row] for row in chosen.k],
        gamma=chosen.gamma,
        max_eig=chosen.max_eig,
        zone_max_eig=outcome.zone_max_eig,
        candidate_count=len(outcome.rows),
        table=[CandidateRecord.from_row(r) for r in outcome.table],
    )
