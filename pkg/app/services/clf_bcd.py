"""Common-Lyapunov-function state feedback for two switching subsystems.

Both synthesis variants alternate a P-step (chained Lyapunov solves with K fixed) and a
K-step (projected subgradient on the largest eigenvalue of the K-affine constraint blocks
with P fixed) until the CLF margin stops moving.
"""
import logging
import time
from typing import Callable, List, Optional, Tuple

import numpy as np

from ..constants.app_constants import NumConstants, SynthesisConstants
from ..core import numkit
from ..core.exceptions import ConfigError, NumericalError, SynthesisInfeasibleError
from ..models.config_models import WorkbenchConfig
from ..models.synthesis_models import (
    ClfCertificate, ClfProblem, ClfSolution, Penalty, SpectralSubproblem
)
from .ac_feeder import alpha_bound, closed_loop, resolve_matrix

logger = logging.getLogger(__name__)

IterateHook = Callable[[np.ndarray, float], None]


# ---------------------------------------------------------------- spectral subproblem


def _project(k: np.ndarray, mask: np.ndarray, rho: float) -> np.ndarray:
    k = k * mask
    norm = numkit.spectral_norm(k)
    if norm > rho:
        k = k * (rho / norm)
    return k


def _evaluate(sp: SpectralSubproblem, k: np.ndarray) -> Tuple[float, float, np.ndarray]:
    """(penalized objective, λmax, masked subgradient)."""
    lam, v = numkit.eig_sym_max_vec(sp.block(k))
    grad = np.zeros_like(k)
    for left, right in sp.terms:
        grad += 2.0 * np.outer(left.T @ v, right @ v)
    value = lam
    if sp.penalty is not None:
        pv, pg = sp.penalty(k)
        value += pv
        grad += pg
    return value, lam, grad * sp.mask


def minimize_lambda_max(sp: SpectralSubproblem, start: np.ndarray, iters: int = SynthesisConstants.SUBGRAD_ITERS,
                        on_iterate: Optional[IterateHook] = None) -> Tuple[np.ndarray, float]:
    """Projected subgradient with Polyak steps; returns the best iterate and its λmax."""
    start = np.asarray(start, dtype=float)
    if start.shape != sp.shape:
        raise ValueError(f"start shape {start.shape} does not match mask {sp.shape}")
    if np.any(start[sp.mask == 0.0] != 0.0):
        raise ValueError("start violates the zero pattern")
    if numkit.spectral_norm(start) > sp.rho + SynthesisConstants.NORM_SLACK:
        raise ValueError("start lies outside the gain ball")

    k = start.copy()
    best_f, best_lam, g = _evaluate(sp, k)
    best_k = k.copy()
    if on_iterate is not None:
        on_iterate(best_k, best_lam)
    g_norm = np.linalg.norm(g)
    if g_norm == 0.0:
        return best_k, best_lam

    delta0 = sp.rho * g_norm
    f = best_f
    for it in range(iters):
        g_sq = float(np.sum(g * g))
        if g_sq == 0.0:
            break
        step = (f - best_f + delta0 / (it + 1)) / g_sq
        k = _project(k - step * g, sp.mask, sp.rho)
        f, lam, g = _evaluate(sp, k)
        if f < best_f:
            best_f, best_lam, best_k = f, lam, k.copy()
            if on_iterate is not None:
                on_iterate(best_k, best_lam)
    return best_k, best_lam


def _placed(left: np.ndarray, offset: int, size: int) -> Tuple[np.ndarray, np.ndarray]:
    """(L, R) so that L K R puts left @ K in the diagonal block starting at offset."""
    n, m = left.shape
    l_full = np.zeros((size, m))
    l_full[offset:offset + n] = left
    r_full = np.zeros((n, size))
    r_full[:, offset:offset + n] = np.eye(n)
    return l_full, r_full


def commutation_penalty(a1: np.ndarray, a2: np.ndarray, b: np.ndarray, weight: float, tol: float) -> Penalty:
    """Hinge on ‖A_K1 A_K2 - A_K2 A_K1‖_F above tol."""

    def penalty(k: np.ndarray) -> Tuple[float, np.ndarray]:
        ak1, ak2 = a1 + b @ k, a2 + b @ k
        c = ak1 @ ak2 - ak2 @ ak1
        r = float(np.linalg.norm(c, "fro"))
        if weight == 0.0 or r <= tol:
            return 0.0, np.zeros_like(k)
        grad = b.T @ c @ ak2.T + b.T @ ak1.T @ c - b.T @ c @ ak1.T - b.T @ ak2.T @ c
        return weight * (r - tol), weight * grad / r

    return penalty


def commutation_residual(a1, a2, b, k) -> float:
    ak1, ak2 = closed_loop(a1, b, k), closed_loop(a2, b, k)
    return float(np.linalg.norm(ak1 @ ak2 - ak2 @ ak1, "fro"))


def commutation_tolerance(p: ClfProblem) -> float:
    return p.commutation_tol_rel * numkit.spectral_norm(p.a1) * numkit.spectral_norm(p.a2)


# ---------------------------------------------------------------- certificates


def check_clf(k, p, a1, a2, b, gamma: float, mask: Optional[np.ndarray] = None,
              comm_tol: float = float("inf"), p1: Optional[np.ndarray] = None,
              p0: Optional[np.ndarray] = None, gamma1: Optional[float] = None,
              gamma2: Optional[float] = None, alpha1: float = 0.0, alpha2: float = 0.0) -> ClfCertificate:
    """Recompute every certificate of a candidate (K, P) from scratch."""
    k, p = numkit.as_matrix(k, "k"), numkit.as_matrix(p, "p")
    n = p.shape[0]
    eye = np.eye(n)
    ak1, ak2 = closed_loop(a1, b, k), closed_loop(a2, b, k)
    g1a = (gamma1 or 0.0) * alpha1 ** 2
    lmi1 = numkit.eig_sym_max(ak1.T @ p + p @ ak1 + (gamma + g1a) * eye)
    lmi2 = numkit.eig_sym_max(ak2.T @ p + p @ ak2)
    mask_ok = True if mask is None else bool(np.all(k[np.asarray(mask) == 0.0] == 0.0))

    block1 = block2 = p_bar_min = None
    if p1 is not None and gamma1 is not None and gamma2 is not None:
        p0 = eye if p0 is None else p0
        block1 = numkit.eig_sym_max(np.block([[-p0, p1], [p1, -gamma1 * eye]]))
        block2 = numkit.eig_sym_max(np.block([[-p1, p], [p, -gamma2 * eye]]))
        p_bar = p0 + g1a * (ak2.T + ak2) - gamma2 * alpha2 ** 2 * (ak1.T + ak1)
        p_bar_min = numkit.eig_sym_min(p_bar)

    return ClfCertificate(
        gamma=gamma,
        lmi1_max=lmi1,
        lmi2_max=lmi2,
        max_real_1=numkit.eig_general(ak1).max_real,
        max_real_2=numkit.eig_general(ak2).max_real,
        k_norm=numkit.spectral_norm(k),
        commutation_residual=commutation_residual(a1, a2, b, k),
        commutation_tol=comm_tol,
        mask_respected=mask_ok,
        block1_max=block1,
        block2_max=block2,
        p_bar_min=p_bar_min,
    )


# ---------------------------------------------------------------- no-delay BCD


def _lyapunov_chain(p: ClfProblem, k: np.ndarray, shift: float) -> Tuple[np.ndarray, np.ndarray]:
    eye = np.eye(p.a1.shape[0])
    p1 = numkit.solve_lyapunov(closed_loop(p.a1, p.b, k) - shift * eye, p.p0)
    p2 = numkit.solve_lyapunov(closed_loop(p.a2, p.b, k) - shift * eye, p1)
    if not (numkit.is_positive_definite(p1) and numkit.is_positive_definite(p2)):
        raise NumericalError("chained Lyapunov solution is not positive definite")
    return p1, p2


def _p_step(p: ClfProblem, base_shift: float, solve):
    """Run ``solve(shift)``, raising the shift by BETA_STEP after each numerical failure."""
    shift = base_shift
    for _ in range(SynthesisConstants.BETA_RETRIES + 1):
        try:
            return solve(shift), shift
        except NumericalError as e:
            logger.debug(f"P-step rejected at shift {shift:g}: {str(e)}")
            shift += SynthesisConstants.BETA_STEP
    raise SynthesisInfeasibleError(f"{p.name}: no positive definite Lyapunov chain after "
                                   f"{SynthesisConstants.BETA_RETRIES} shift increases")


def _clf_margin(p: ClfProblem, k: np.ndarray, p2: np.ndarray, extra: float = 0.0) -> float:
    ak1 = closed_loop(p.a1, p.b, k)
    return -numkit.eig_sym_max(ak1.T @ p2 + p2 @ ak1 + extra * np.eye(p2.shape[0]))


def _no_delay_k_step(p: ClfProblem, k: np.ndarray, p2: np.ndarray, penalty: Penalty,
                     on_iterate: Optional[IterateHook]) -> np.ndarray:
    n = p.a1.shape[0]
    s1 = p.a1.T @ p2 + p2 @ p.a1
    s2 = p.a2.T @ p2 + p2 @ p.a2
    pb = p2 @ p.b
    sp = SpectralSubproblem(f0=numkit.block_diag(s1, s2),
                            terms=[_placed(pb, 0, 2 * n), _placed(pb, n, 2 * n)],
                            mask=p.mask, rho=p.rho, penalty=penalty)
    k_new, _ = minimize_lambda_max(sp, k, p.subgrad_iters, on_iterate)
    return k_new


def _failed_terms(cert: ClfCertificate) -> List[str]:
    margin = NumConstants.NEG_DEF_MARGIN
    failed = [name for name, value in (("lmi1", cert.lmi1_max), ("lmi2", cert.lmi2_max),
                                       ("block1", cert.block1_max), ("block2", cert.block2_max))
              if value is not None and value > -margin]
    if cert.p_bar_min is not None and cert.p_bar_min < margin:
        failed.append("p_bar")
    if not cert.hurwitz:
        failed.append("hurwitz")
    if not cert.mask_respected:
        failed.append("mask")
    return failed


def _require_passed(p: ClfProblem, cert: ClfCertificate) -> None:
    if cert.passed:
        return
    failed = _failed_terms(cert)
    logger.error(f"Synthesis error: {p.name} certificate fails on {', '.join(failed)}")
    raise SynthesisInfeasibleError(f"{p.name}: certificate fails on {', '.join(failed)}",
                                   certificates=cert.__dict__)


def _finish(p: ClfProblem, best: Optional[dict], trace: List[float], iterations: int,
            comm_tol: float, **delay) -> ClfSolution:
    if best is None:
        raise SynthesisInfeasibleError(f"{p.name}: no iterate produced a certificate")
    k, p2 = best["k"], best["p2"]
    # λmax of the first LMI lands at -2·margin, inside the pass threshold
    gamma = best["gamma"] - 2.0 * NumConstants.NEG_DEF_MARGIN
    cert = check_clf(k, p2, p.a1, p.a2, p.b, gamma, mask=p.mask, comm_tol=comm_tol,
                     p1=best.get("p1") if delay else None, p0=p.p0,
                     gamma1=best.get("gamma1"), gamma2=best.get("gamma2"),
                     alpha1=p.alpha1, alpha2=p.alpha2)
    _require_passed(p, cert)
    return ClfSolution(k=k, p2=p2, gamma=gamma, certificate=cert, p1=best.get("p1"),
                       gamma1=best.get("gamma1"), gamma2=best.get("gamma2"), gamma_trace=trace,
                       iterations=iterations, beta=best["shift"],
                       p_step_feasible=best.get("feasible", True))


def bcd_no_delay(p: ClfProblem, on_iterate: Optional[IterateHook] = None) -> ClfSolution:
    start_time = time.time()
    logger.info(f"Starting no-delay CLF synthesis for {p.name}")
    comm_tol = commutation_tolerance(p)
    penalty = commutation_penalty(p.a1, p.a2, p.b, p.commutation_weight, comm_tol)

    k = np.zeros(p.mask.shape)
    trace: List[float] = []
    best = None
    iterations = 0
    for outer in range(p.max_outer):
        iterations = outer + 1
        base = p.beta if outer == 0 else 0.0
        (p1, p2), shift = _p_step(p, base, lambda s: _lyapunov_chain(p, k, s))
        gamma = _clf_margin(p, k, p2)
        trace.append(gamma)
        hurwitz = all(numkit.eig_general(closed_loop(a, p.b, k)).is_hurwitz for a in (p.a1, p.a2))
        ak2 = closed_loop(p.a2, p.b, k)
        second_ok = numkit.is_negative_definite(ak2.T @ p2 + p2 @ ak2)
        logger.debug(f"[{p.name}] iter {outer}: gamma={gamma:.6g} shift={shift:g} ‖K‖={numkit.spectral_norm(k):.4f}")
        if hurwitz and (best is None or (second_ok, gamma) > (best["second_ok"], best["gamma"])):
            best = {"k": k.copy(), "p1": p1, "p2": p2, "gamma": gamma, "shift": shift, "second_ok": second_ok}
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= SynthesisConstants.GAMMA_TOL:
            break
        k = _no_delay_k_step(p, k, p2, penalty, on_iterate)

    solution = _finish(p, best, trace, iterations, comm_tol)
    logger.info(f"Finished {p.name} in {time.time() - start_time:.2f}s: gamma={solution.gamma:.6g}, "
                f"‖K‖={solution.certificate.k_norm:.4f}")
    return solution


# ---------------------------------------------------------------- delay BCD


def gamma_grid() -> np.ndarray:
    lo = np.log10(SynthesisConstants.GAMMA_MIN)
    hi = np.log10(SynthesisConstants.GAMMA_MAX)
    count = int(round((hi - lo) * SynthesisConstants.GAMMA_GRID_PER_DECADE)) + 1
    return np.logspace(lo, hi, count)


def _delay_p_step(p: ClfProblem, k: np.ndarray, shift: float) -> dict:
    """Grid search over (γ1, γ2) maximizing γ1 + γ2 under the block conditions."""
    n = p.a1.shape[0]
    eye = np.eye(n)
    ak1, ak2 = closed_loop(p.a1, p.b, k), closed_loop(p.a2, p.b, k)
    s1, s2 = ak1 - shift * eye, ak2 - shift * eye
    # P1, P2 are affine in (γ1, γ2)
    l1 = numkit.solve_lyapunov(s1, p.p0)
    m1 = numkit.solve_lyapunov(s1, eye)
    l2 = numkit.solve_lyapunov(s2, l1)
    n2 = numkit.solve_lyapunov(s2, m1)
    m2 = numkit.solve_lyapunov(s2, eye)
    a1sq, a2sq = p.alpha1 ** 2, p.alpha2 ** 2
    sym1, sym2 = ak1 + ak1.T, ak2 + ak2.T

    best_feasible, best_fallback = None, None
    for g1 in gamma_grid():
        p1 = l1 + g1 * a1sq * m1
        v_p1 = -numkit.eig_sym_min(p1)
        v_b1 = numkit.eig_sym_max(np.block([[-p.p0, p1], [p1, -g1 * eye]]))
        for g2 in gamma_grid():
            p2 = l2 + g1 * a1sq * n2 + g2 * a2sq * m2
            violation = max(
                v_p1,
                v_b1,
                -numkit.eig_sym_min(p2),
                numkit.eig_sym_max(np.block([[-p1, p2], [p2, -g2 * eye]])),
                -numkit.eig_sym_min(p.p0 + g1 * a1sq * sym2 - g2 * a2sq * sym1),
                numkit.eig_sym_max(ak1.T @ p2 + p2 @ ak1 + g1 * a1sq * eye),
            )
            cand = {"p1": p1, "p2": p2, "gamma1": float(g1), "gamma2": float(g2), "violation": violation}
            if violation <= -NumConstants.NEG_DEF_MARGIN:
                if best_feasible is None or g1 + g2 > best_feasible["gamma1"] + best_feasible["gamma2"]:
                    best_feasible = cand
            elif best_fallback is None or violation < best_fallback["violation"]:
                best_fallback = cand
    if best_feasible is not None:
        best_feasible["feasible"] = True
        return best_feasible
    best_fallback["feasible"] = False
    if not (numkit.is_positive_definite(best_fallback["p1"]) and numkit.is_positive_definite(best_fallback["p2"])):
        raise NumericalError("delay Lyapunov chain is not positive definite")
    return best_fallback


def _delay_k_step(p: ClfProblem, k: np.ndarray, st: dict, penalty: Penalty,
                  on_iterate: Optional[IterateHook]) -> np.ndarray:
    n = p.a1.shape[0]
    eye = np.eye(n)
    p1, p2 = st["p1"], st["p2"]
    g1a, g2a = st["gamma1"] * p.alpha1 ** 2, st["gamma2"] * p.alpha2 ** 2
    e1 = p.a1.T @ p1 + p1 @ p.a1 + g1a * eye
    e2 = p.a2.T @ p2 + p2 @ p.a2 + g2a * eye
    c = p.a1.T @ p2 + p2 @ p.a1 + g1a * eye
    neg_p_bar = -(p.p0 + g1a * (p.a2 + p.a2.T) - g2a * (p.a1 + p.a1.T))
    size = 4 * n
    terms = [
        _placed(p1 @ p.b, 0, size),
        _placed(p2 @ p.b, n, size),
        _placed(p2 @ p.b, 2 * n, size),
        _placed((g2a - g1a) * p.b, 3 * n, size),
    ]
    sp = SpectralSubproblem(f0=numkit.block_diag(e1, e2, c, neg_p_bar), terms=terms,
                            mask=p.mask, rho=p.rho, penalty=penalty)
    k_new, _ = minimize_lambda_max(sp, k, p.subgrad_iters, on_iterate)
    return k_new


def _minimal_block_gamma(p_prev: np.ndarray, p_cur: np.ndarray) -> float:
    """Smallest γ (with slack) making [[-P_prev, P], [P, -γI]] negative definite."""
    inv_prev = np.linalg.inv(p_prev)
    need = numkit.eig_sym_max(p_cur @ inv_prev @ p_cur)
    return float(need * (1.0 + 1e-3) + 1e-9)


def bcd_delay(p: ClfProblem, on_iterate: Optional[IterateHook] = None) -> ClfSolution:
    if not p.is_delay:
        # zero delay bounds: the delay family collapses onto the no-delay one
        sol = bcd_no_delay(p, on_iterate)
        g1 = _minimal_block_gamma(p.p0, sol.p1)
        g2 = _minimal_block_gamma(sol.p1, sol.p2)
        sol.gamma1, sol.gamma2 = g1, g2
        sol.certificate = check_clf(sol.k, sol.p2, p.a1, p.a2, p.b, sol.gamma, mask=p.mask,
                                    comm_tol=sol.certificate.commutation_tol, p1=sol.p1, p0=p.p0,
                                    gamma1=g1, gamma2=g2)
        _require_passed(p, sol.certificate)
        return sol

    start_time = time.time()
    logger.info(f"Starting delay CLF synthesis for {p.name} (alpha1={p.alpha1:.4g}, alpha2={p.alpha2:.4g})")
    comm_tol = commutation_tolerance(p)
    penalty = commutation_penalty(p.a1, p.a2, p.b, p.commutation_weight, comm_tol)

    k = np.zeros(p.mask.shape)
    trace: List[float] = []
    best = None
    iterations = 0
    for outer in range(p.max_outer):
        iterations = outer + 1
        base = p.beta if outer == 0 else 0.0
        st, shift = _p_step(p, base, lambda s: _delay_p_step(p, k, s))
        gamma = _clf_margin(p, k, st["p2"], st["gamma1"] * p.alpha1 ** 2)
        trace.append(gamma)
        hurwitz = all(numkit.eig_general(closed_loop(a, p.b, k)).is_hurwitz for a in (p.a1, p.a2))
        logger.debug(f"[{p.name}] iter {outer}: gamma={gamma:.6g} g1={st['gamma1']:.3g} "
                     f"g2={st['gamma2']:.3g} feasible={st['feasible']}")
        # feasible P-steps rank above infeasible ones
        rank = (st["feasible"], gamma)
        if hurwitz and (best is None or rank > (best["feasible"], best["gamma"])):
            best = {"k": k.copy(), "gamma": gamma, "shift": shift, **st}
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= SynthesisConstants.GAMMA_TOL:
            break
        k = _delay_k_step(p, k, st, penalty, on_iterate)

    if best is not None and not best["feasible"]:
        logger.warning(f"{p.name}: delay block conditions infeasible at every iterate; "
                       f"the certificate decides whether the best stabilizing gain survives")
    solution = _finish(p, best, trace, iterations, comm_tol, delay=True)
    logger.info(f"Finished {p.name} in {time.time() - start_time:.2f}s: gamma={solution.gamma:.6g}, "
                f"feasible={solution.p_step_feasible}")
    return solution


# ---------------------------------------------------------------- config plumbing


def build_clf_problem(name: str, cfg: WorkbenchConfig, delay: bool = False,
                      rho: Optional[float] = None) -> ClfProblem:
    if name not in cfg.clf_problems:
        raise ConfigError(f"unknown problem '{name}'; valid: {', '.join(sorted(cfg.clf_problems))}")
    pc = cfg.clf_problems[name]
    a1 = resolve_matrix(pc.a1, cfg, "a")
    a2 = resolve_matrix(pc.a2, cfg, "a")
    b = resolve_matrix(pc.b, cfg, "b")
    if a1.shape != a2.shape or b.shape[0] != a1.shape[0]:
        raise ConfigError(f"problem '{name}' has inconsistent matrix shapes")
    rho = rho if rho is not None else pc.rho

    mask = np.ones((b.shape[1], a1.shape[0]))
    for entry in pc.sparsity or []:
        i, j = entry
        if not (0 <= i < mask.shape[0] and 0 <= j < mask.shape[1]):
            raise ConfigError(f"sparsity entry {entry} outside K of shape {mask.shape}")
        mask[i, j] = 0.0

    alpha1 = alpha2 = 0.0
    if delay:
        if pc.delay_1 is None or pc.delay_2 is None:
            raise ConfigError(f"problem '{name}' defines no delay matrices; drop --delay")
        d1 = resolve_matrix(pc.delay_1, cfg)
        d2 = resolve_matrix(pc.delay_2, cfg)
        alpha1 = alpha_bound(rho, a1, b, d1)
        alpha2 = alpha_bound(rho, a2, b, d2)

    return ClfProblem(a1=a1, a2=a2, b=b, rho=rho, beta=pc.beta, p0=pc.p0_scale * np.eye(a1.shape[0]),
                      mask=mask, alpha1=alpha1, alpha2=alpha2, commutation_weight=pc.commutation_weight,
                      commutation_tol_rel=pc.commutation_tol_rel, subgrad_iters=pc.subgrad_iters,
                      max_outer=pc.max_outer, name=name)
