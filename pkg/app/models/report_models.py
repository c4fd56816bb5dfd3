from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel

from ..constants.app_constants import CheckSeverity
from .synthesis_models import CandidateRow, ClfCertificate, ClfProblem, ClfSolution

Matrix = List[List[float]]


def _matrix(m: Optional[np.ndarray]) -> Optional[Matrix]:
    return None if m is None else [[float(v) for v in row] for row in np.asarray(m)]


def _eigs(m: np.ndarray) -> List[List[float]]:
    """Eigenvalues as sorted [re, im] pairs."""
    values = sorted(np.linalg.eigvals(m), key=lambda z: (z.real, z.imag))
    return [[float(z.real), float(z.imag)] for z in values]


class CertificateRecord(BaseModel):
    gamma: float
    lmi1_max: float
    lmi2_max: float
    max_real_1: float
    max_real_2: float
    k_norm: float
    commutation_residual: float
    commutation_tol: float
    mask_respected: bool
    block1_max: Optional[float] = None
    block2_max: Optional[float] = None
    p_bar_min: Optional[float] = None
    hurwitz: bool
    passed: bool

    @classmethod
    def from_certificate(cls, c: ClfCertificate) -> 'CertificateRecord':
        return cls(**c.__dict__, hurwitz=c.hurwitz, passed=c.passed)


class SolutionRecord(BaseModel):
    problem: str
    delay: bool
    rho: float
    alpha1: float
    alpha2: float
    k: Matrix
    p1: Optional[Matrix] = None
    p2: Matrix
    gamma: float
    gamma1: Optional[float] = None
    gamma2: Optional[float] = None
    gamma_trace: List[float]
    iterations: int
    beta: float
    p_step_feasible: bool
    closed_loop_1: List[List[float]]
    closed_loop_2: List[List[float]]
    certificate: CertificateRecord

    @classmethod
    def from_solution(cls, problem: ClfProblem, sol: ClfSolution) -> 'SolutionRecord':
        return cls(
            problem=problem.name,
            delay=problem.is_delay,
            rho=problem.rho,
            alpha1=problem.alpha1,
            alpha2=problem.alpha2,
            k=_matrix(sol.k),
            p1=_matrix(sol.p1),
            p2=_matrix(sol.p2),
            gamma=sol.gamma,
            gamma1=sol.gamma1,
            gamma2=sol.gamma2,
            gamma_trace=[float(g) for g in sol.gamma_trace],
            iterations=sol.iterations,
            beta=sol.beta,
            p_step_feasible=sol.p_step_feasible,
            closed_loop_1=_eigs(problem.a1 + problem.b @ sol.k),
            closed_loop_2=_eigs(problem.a2 + problem.b @ sol.k),
            certificate=CertificateRecord.from_certificate(sol.certificate),
        )


class CandidateRecord(BaseModel):
    cp: str
    max_eig: float
    gamma: float
    links: Optional[List[List[int]]] = None

    @classmethod
    def from_row(cls, row: CandidateRow) -> 'CandidateRecord':
        links = None if row.topology is None else row.topology.links.astype(int).tolist()
        return cls(cp=row.cp.code, max_eig=row.max_eig, gamma=row.gamma, links=links)


class DesignReport(BaseModel):
    problem: str
    epsilon: float
    alpha: float
    open_loop_max_eig: float
    chosen_cp: str
    chosen_links: List[List[int]]
    k: Matrix
    gamma: float
    max_eig: float
    zone_max_eig: Dict[str, float]
    candidate_count: int
    table: List[CandidateRecord]


class MetricRecord(BaseModel):
    channel: str
    t_start: float
    t_end: float
    rise_ms: Optional[float] = None
    settling_ms: Optional[float] = None
    sse: float
    overshoot_pct: float
    settled: bool


class SimReport(BaseModel):
    case: str
    controller: str
    plant: str
    dt: float
    duration: float
    samples: int
    metrics: List[MetricRecord]


class CheckResult(BaseModel):
    name: str
    severity: CheckSeverity
    passed: bool
    expected: Optional[float] = None
    computed: Optional[float] = None
    tolerance: Optional[float] = None
    detail: str = ""


class VerifyReport(BaseModel):
    checks: List[CheckResult]
    hard_total: int
    hard_failed: int
    soft_mismatches: int

    @property
    def ok(self) -> bool:
        return self.hard_failed == 0
