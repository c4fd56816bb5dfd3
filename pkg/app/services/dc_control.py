"""Primary controllers and secondary reference generation for the DC plants.

Three families live here:

* the 9-state HESS controllers: the adaptive-observer backstepping law (``aob_step``)
  and the same law fed with measured disturbances (``baseline_bs_step``);
* the 6-state PV/battery controllers: backstepping (``bs_pvbat_step``), adaptive
  backstepping (``abs_pvbat_step``) and the RBF adaptive neural controller (``anc_step``);
* the power-balance reference generators for both plants.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..constants.app_constants import ControlConstants
from ..core.exceptions import ControllerFaultError, InfeasibleOperatingPointError
from ..models.config_models import AncConfig, AobGains, DcParams, PvBatGains
from ..models.plant_models import (
    AncState, AobState, HessDisturbance, PvBatDisturbance, PvBatObserverState, RbfLayer, RefSet
)

logger = logging.getLogger(__name__)


def _clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def _floor_abs(v: float, eps: float) -> float:
    if abs(v) >= eps:
        return v
    return eps if v >= 0.0 else -eps


def _check(terms: Dict[str, float]) -> None:
    for name, value in terms.items():
        if not math.isfinite(value):
            raise ControllerFaultError(name, value)


def _quadratic_roots(a: float, b: float, c: float, what: str) -> Tuple[float, float]:
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        raise InfeasibleOperatingPointError(
            f"{what}: negative discriminant {disc:.4g} (load and MPP cannot be balanced)")
    sq = math.sqrt(disc)
    return (-b + sq) / (2.0 * a), (-b - sq) / (2.0 * a)


def _battery_root(roots: Tuple[float, float], rule: str) -> float:
    if rule == "max":
        return max(roots)
    return min(roots, key=abs)


def secondary_refs_hess(v_dc_ref: float, v_mpp: float, i_mpp: float, d2: float, r_load: float,
                        params: DcParams, battery_root: str = "min_abs") -> RefSet:
    p = params
    x9 = v_dc_ref
    c1 = i_mpp ** 2 * p.r_pvo * p.r_pv - v_mpp * i_mpp * p.r_pvo
    roots = _quadratic_roots(1.0, -x9, c1, "pv output voltage")
    x2 = min(roots, key=lambda r: abs(r - v_dc_ref))
    x5 = -p.r_bo / p.r_pvo * x2 + x9 * (1.0 + p.r_bo / p.r_pvo + p.r_bo / r_load)
    a2 = p.r_bo * (p.r_bi + p.r_b)
    b2 = -p.r_bo * d2
    c2 = x5 ** 2 - x5 * x9
    x6 = _battery_root(_quadratic_roots(a2, b2, c2, "battery current"), battery_root)
    x4 = d2 - x6 * p.r_bi
    return RefSet(x1=v_mpp, x2=x2, x3=i_mpp, x4=x4, x5=x5, x6=x6, x7=0.0, x8=v_dc_ref, x9=x9)


def secondary_refs_pvbat(v_dc_ref: float, v_mpp: float, i_mpp: float, v_b: float, r_load: float,
                         params: DcParams, battery_root: str = "min_abs") -> RefSet:
    p = params
    x6 = v_dc_ref
    c1 = i_mpp ** 2 * p.r_pvo * p.r_pv - v_mpp * i_mpp * p.r_pvo
    x2 = min(_quadratic_roots(1.0, -x6, c1, "pv output voltage"), key=lambda r: abs(r - v_dc_ref))
    x5 = x6 + p.r_bo * (x6 / r_load - (x2 - x6) / p.r_pvo)
    if p.r_b > 0.0:
        x4 = _battery_root(_quadratic_roots(p.r_b, -v_b, x5 * (x5 - x6) / p.r_bo, "battery current"),
                           battery_root)
    else:
        x4 = x5 * (x5 - x6) / (p.r_bo * v_b)
    return RefSet(x1=v_mpp, x2=x2, x3=i_mpp, x4=x4, x5=x5, x6=x6)


# ---------------------------------------------------------------- 9-state HESS


@dataclass(frozen=True)
class LawTerms:
    u: Tuple[float, float, float]
    e: Tuple[float, ...]          # e1, e2, e3, e4, e5, e6, e7, e8, e9
    alpha8_dot: float


def _hess_law(x: Sequence[float], refs: RefSet, d_hat: Sequence[float], d_hat_dot: Sequence[float],
              st: AobState, g: AobGains, p: DcParams) -> LawTerms:
    x1, x2, x3, x4, x5, x6, x7, x8, x9 = x
    dh1, dh2, dh3, dh4 = d_hat
    dd1, dd2, _, dd4 = d_hat_dot
    eps = ControlConstants.EPS_DEN
    lo, hi = ControlConstants.AOB_DUTY_MIN, ControlConstants.AOB_DUTY_MAX

    # PV: alpha3, u1
    e1 = x1 - refs.x1
    x1_dot = (dh1 - x3) / p.c_pvi
    alpha3 = dh1 + p.c_pvi * g.k1 * e1
    alpha3_dot = p.c_pvi * g.k1 * x1_dot + dd1
    e3 = x3 - alpha3
    u1_raw = (-p.l_pv * g.k3 * e3 - x1 + x2 + p.r_pv * x3 + p.l_pv * alpha3_dot) / _floor_abs(x2, eps)

    # battery: alpha6, u2
    e4 = x4 - refs.x4
    x4_dot = (dh2 - x4) / (p.r_bi * p.c_bi) - x6 / p.c_bi
    alpha6 = (dh2 - x4) / p.r_bi + p.c_bi * g.k4 * e4
    alpha6_dot = (p.c_bi * g.k4 - 1.0 / p.r_bi) * x4_dot + dd2 / p.r_bi
    e6 = x6 - alpha6
    u2_raw = (-p.l_b * g.k6 * e6 - x4 + x5 + p.r_b * x6 + p.l_b * alpha6_dot) / _floor_abs(x5, eps)

    u1 = _clamp(u1_raw, lo, hi)
    u2 = _clamp(u2_raw, lo, hi)

    # bus: alpha8 via the supercap branch
    e2 = x2 - refs.x2
    e5 = x5 - refs.x5
    e9 = x9 - refs.x9
    z_hat = 1.0 / p.r_pvo + 1.0 / p.r_bo + 1.0 / p.r_sco + dh4
    x2_dot = x3 / p.c_pvo + (x9 - x2) / (p.r_pvo * p.c_pvo) - x3 * u1 / p.c_pvo
    x5_dot = x6 / p.c_bo + (x9 - x5) / (p.r_bo * p.c_bo) - x6 * u2 / p.c_bo
    x9_dot = (x2 / p.r_pvo + x5 / p.r_bo + x8 / p.r_sco - x9 * z_hat) / p.c_l
    rr = p.r_sco
    if g.alpha8_form == "compact":
        alpha8 = (-rr * p.c_l * g.k9 * e9 - rr / p.r_pvo * x2 - rr / p.r_bo * x5
                  + x9 * (rr / p.r_pvo + rr / p.r_bo + 1.0 + rr * dh4))
        alpha8_dot = (-rr * p.c_l * g.k9 * x9_dot - rr / p.r_pvo * x2_dot - rr / p.r_bo * x5_dot
                      + x9_dot * (rr / p.r_pvo + rr / p.r_bo + 1.0 + rr * dh4) + x9 * rr * dd4)
    else:
        x9f = _floor_abs(x9, eps)
        x3_dot = (x1 - x2 - p.r_pv * x3 + x2 * u1) / p.l_pv
        x6_dot = (x4 - x5 - p.r_b * x6 + x5 * u2) / p.l_b
        a = -p.c_pvo * g.k2 * e2 - x3 + (x2 - x9) / p.r_pvo + x3 * u1
        b = -p.c_bo * g.k5 * e5 - x6 + (x5 - x9) / p.r_bo + x6 * u2
        a_dot = (-p.c_pvo * g.k2 * x2_dot - x3_dot + (x2_dot - x9_dot) / p.r_pvo
                 + x3_dot * u1 + x3 * st.u1_dot)
        b_dot = (-p.c_bo * g.k5 * x5_dot - x6_dot + (x5_dot - x9_dot) / p.r_bo
                 + x6_dot * u2 + x6 * st.u2_dot)
        alpha8 = (-rr / p.r_pvo * x2 - rr / p.r_bo * x5 + rr / x9f * e2 * a
                  - rr * p.c_l * g.k9 * e9 ** 2 / x9f + rr / x9f * e5 * b + rr * x9 * z_hat)
        alpha8_dot = (-rr / p.r_pvo * x2_dot - rr / p.r_bo * x5_dot + rr * x9_dot * z_hat
                      + rr * x9 * dd4 - 2.0 * rr * p.c_l * g.k9 * e9 * x9_dot / x9f
                      + x9_dot * rr * p.c_l * g.k9 * e9 ** 2 / x9f ** 2
                      + rr * (x2_dot * a + e2 * a_dot) / x9f - rr * x9_dot * e2 * a / x9f ** 2
                      + rr * (x5_dot * b + e5 * b_dot) / x9f - rr * x9_dot * e5 * b / x9f ** 2)
    e8 = x8 - alpha8

    # supercap: alpha7, u3
    x8_dot = x7 / p.c_sco + (x9 - x8) / (p.r_sco * p.c_sco)
    alpha7 = -p.c_sco * g.k8 * e8 + (x8 - x9) / p.r_sco + p.c_sco * alpha8_dot
    alpha7_dot = (-p.c_sco * g.k8 * (x8_dot - alpha8_dot) + (x8_dot - x9_dot) / p.r_sco
                  + p.c_sco * st.alpha8_ddot)
    e7 = x7 - alpha7
    u3_raw = (-p.l_sc * g.k7 * e7 + x8 + p.r_sc * x7 + p.l_sc * alpha7_dot) / _floor_abs(dh3, eps)
    u3 = _clamp(u3_raw, lo, hi)

    _check({"alpha3": alpha3, "alpha6": alpha6, "alpha8": alpha8, "alpha8_dot": alpha8_dot,
            "alpha7": alpha7, "alpha7_dot": alpha7_dot, "u1": u1_raw, "u2": u2_raw, "u3": u3_raw})
    return LawTerms(u=(u1, u2, u3), e=(e1, e2, e3, e4, e5, e6, e7, e8, e9), alpha8_dot=alpha8_dot)


def _advance_filters(st: AobState, terms: LawTerms, dt: float) -> None:
    k = 1.0 / ControlConstants.ALPHA_FILTER_STEPS
    u1, u2, _ = terms.u
    st.u1_dot += k * ((u1 - st.prev_u1) / dt - st.u1_dot)
    st.u2_dot += k * ((u2 - st.prev_u2) / dt - st.u2_dot)
    st.prev_u1, st.prev_u2 = u1, u2
    if st.alpha8_dot_prev is not None:
        st.alpha8_ddot += k * ((terms.alpha8_dot - st.alpha8_dot_prev) / dt - st.alpha8_ddot)
    st.alpha8_dot_prev = terms.alpha8_dot


def _observer_rates(x: Sequence[float], e: Sequence[float], u3: float, g: AobGains) -> Tuple[float, float, float, float]:
    x9 = x[8]
    e1, _, _, e4, _, _, e7, _, e9 = e
    if g.d4_law == "printed":
        dd4 = -g.gamma4 * x9 * x9
    else:
        dd4 = -g.gamma4 * x9 * e9
    return g.gamma1 * e1, g.gamma2 * e4, g.gamma3 * e7 * u3, dd4


def _known_rates(x: Sequence[float], refs: RefSet, g: AobGains) -> Tuple[float, float, float, float]:
    # e1, e4, e9 are plain output errors, so the rates feeding alpha3/6/8 are known up front
    x9 = x[8]
    dd4 = -g.gamma4 * x9 * x9 if g.d4_law == "printed" else -g.gamma4 * x9 * (x9 - refs.x9)
    return g.gamma1 * (x[0] - refs.x1), g.gamma2 * (x[3] - refs.x4), 0.0, dd4


def aob_step(x: Sequence[float], refs: RefSet, st: AobState, g: AobGains, params: DcParams,
             dt: float) -> Tuple[Tuple[float, float, float], AobState]:
    """One control period of the adaptive-observer backstepping law."""
    nxt = st.copy()
    d_hat = (st.d1_hat, st.d2_hat, st.d3_hat, st.d4_hat)

    terms = _hess_law(x, refs, d_hat, _known_rates(x, refs, g), st, g, params)
    rates = _observer_rates(x, terms.e, terms.u[2], g)

    nxt.d1_hat += dt * rates[0]
    nxt.d2_hat += dt * rates[1]
    nxt.d3_hat += dt * rates[2]
    nxt.d4_hat = max(0.0, nxt.d4_hat + dt * rates[3])
    _advance_filters(nxt, terms, dt)
    _check({"d1_hat": nxt.d1_hat, "d2_hat": nxt.d2_hat, "d3_hat": nxt.d3_hat, "d4_hat": nxt.d4_hat})
    return terms.u, nxt


def baseline_bs_step(x: Sequence[float], refs: RefSet, d_measured: HessDisturbance, g: AobGains,
                     params: DcParams, dt: float,
                     st: Optional[AobState] = None) -> Tuple[Tuple[float, float, float], AobState]:
    """Backstepping law with measured disturbances in place of the observer."""
    d = (d_measured.d1, d_measured.d2, d_measured.d3, d_measured.d4)
    if st is None:
        st = AobState(*d)
    nxt = st.copy()
    nxt.d1_hat, nxt.d2_hat, nxt.d3_hat, nxt.d4_hat = d
    terms = _hess_law(x, refs, d, (0.0, 0.0, 0.0, 0.0), nxt, g, params)
    _advance_filters(nxt, terms, dt)
    return terms.u, nxt


def aob_lyapunov(x: Sequence[float], refs: RefSet, st: AobState, d_true: HessDisturbance,
                 g: AobGains, params: DcParams) -> float:
    """Composite quadratic error plus observer-error energy."""
    p = params
    terms = _hess_law(x, refs, (st.d1_hat, st.d2_hat, st.d3_hat, st.d4_hat), _known_rates(x, refs, g),
                      st, g, params)
    e1, e2, e3, e4, e5, e6, e7, e8, e9 = terms.e
    v = (0.5 * p.c_pvi * e1 ** 2 + 0.5 * p.l_pv * e3 ** 2 + 0.5 * p.c_bi * e4 ** 2
         + 0.5 * p.l_b * e6 ** 2 + 0.5 * p.c_l * e9 ** 2 + 0.5 * p.c_sco * e8 ** 2
         + 0.5 * p.l_sc * e7 ** 2)
    if g.alpha8_form == "derivation":
        v += 0.5 * p.c_pvo * e2 ** 2 + 0.5 * p.c_bo * e5 ** 2
    # battery error sees d̃2 through 1/r_bi
    v += ((d_true.d1 - st.d1_hat) ** 2 / (2 * g.gamma1) + (d_true.d2 - st.d2_hat) ** 2 / (2 * g.gamma2 * p.r_bi)
          + (d_true.d3 - st.d3_hat) ** 2 / (2 * g.gamma3) + (d_true.d4 - st.d4_hat) ** 2 / (2 * g.gamma4))
    return v


# ---------------------------------------------------------------- 6-state PV/battery


def _pvbat_law(x: Sequence[float], refs: RefSet, D_hat: Sequence[float], D_hat_dot: Sequence[float],
               g: PvBatGains, p: DcParams) -> Tuple[Tuple[float, float], Tuple[float, float, float, float]]:
    x1, x2, x3, x4, x5, x6 = x
    D1, D2, D3 = D_hat
    dD1, _, _ = D_hat_dot
    eps = ControlConstants.EPS_DEN

    e1 = x1 - refs.x1
    x1_dot = -x3 / p.c_pvi + D1
    alpha3 = p.c_pvi * (D1 + g.k1 * e1)
    alpha3_dot = p.c_pvi * (dD1 + g.k1 * x1_dot)
    e3 = x3 - alpha3
    u1 = (-g.k3 * e3 - x1 + x2 + p.r_pv * x3 + p.l_pv * alpha3_dot) / _floor_abs(x2, eps)

    e6 = x6 - refs.x6
    x6_dot = ((x2 - x6) / (p.c_l * p.r_pvo) + (x5 - x6) / (p.c_l * p.r_bo) - x6 * D3)
    alpha4 = refs.x4 - g.k6 * e6
    alpha4_dot = -g.k6 * x6_dot
    e4 = x4 - alpha4
    u2 = (-g.k4 * p.l_b * e4 - D2 * p.l_b + p.r_b * x4 + x5 + p.l_b * alpha4_dot) / _floor_abs(x5, eps)

    _check({"alpha3": alpha3, "alpha4": alpha4, "u1": u1, "u2": u2})
    lo, hi = ControlConstants.AOB_DUTY_MIN, ControlConstants.AOB_DUTY_MAX
    return (_clamp(u1, lo, hi), _clamp(u2, lo, hi)), (e1, e3, e4, e6)


def bs_pvbat_step(x: Sequence[float], refs: RefSet, D_measured: PvBatDisturbance, g: PvBatGains,
                  params: DcParams) -> Tuple[float, float]:
    u, _ = _pvbat_law(x, refs, (D_measured.D1, D_measured.D2, D_measured.D3), (0.0, 0.0, 0.0), g, params)
    return u


def abs_pvbat_step(x: Sequence[float], refs: RefSet, st: PvBatObserverState, g: PvBatGains,
                   params: DcParams, dt: float) -> Tuple[Tuple[float, float], PvBatObserverState]:
    D_hat = (st.D1_hat, st.D2_hat, st.D3_hat)
    e1 = x[0] - refs.x1
    u, (e1, _, e4, e6) = _pvbat_law(x, refs, D_hat, (g.gamma1 * e1, 0.0, 0.0), g, params)
    nxt = st.copy()
    nxt.D1_hat += dt * g.gamma1 * e1
    nxt.D2_hat += dt * g.gamma2 * e4
    nxt.D3_hat = max(0.0, nxt.D3_hat - dt * g.gamma3 * x[5] * e6)
    _check({"D1_hat": nxt.D1_hat, "D2_hat": nxt.D2_hat, "D3_hat": nxt.D3_hat})
    return u, nxt


# ---------------------------------------------------------------- adaptive neural controller


def rbf_eval(z, centers, widths) -> np.ndarray:
    zc = np.atleast_2d(np.asarray(z, dtype=float))
    c = np.asarray(centers, dtype=float)
    if c.ndim == 1:
        c = c.reshape(-1, 1)
    w = np.asarray(widths, dtype=float)
    if np.any(w <= 0):
        raise ValueError("rbf widths must be positive")
    dist2 = np.sum((c - zc.reshape(1, -1)) ** 2, axis=1)
    return np.exp(-dist2 / (2.0 * w ** 2))


def build_anc_layers(cfg: AncConfig) -> List[RbfLayer]:
    layers = []
    for lo, hi in cfg.boxes:
        centers = np.linspace(lo, hi, cfg.nodes).reshape(-1, 1)
        spacing = (hi - lo) / max(cfg.nodes - 1, 1)
        widths = np.full(cfg.nodes, cfg.width_factor * spacing)
        layers.append(RbfLayer(centers=centers, widths=widths))
    return layers


def anc_step(x: Sequence[float], refs: RefSet, st: AncState, cfg: AncConfig, layers: List[RbfLayer],
             dt: float) -> Tuple[Tuple[float, float], AncState]:
    eta, gam, pk = cfg.eta, cfg.gamma, cfg.p
    th = st.theta

    def energy(k: int, e: float) -> float:
        phi = rbf_eval([e], layers[k].centers, layers[k].widths)
        return float(phi @ phi)

    e1 = x[0] - refs.x1
    e6 = x[5] - refs.x6
    s = [0.0] * 6
    s[0] = energy(0, e1)
    s[5] = energy(5, e6)
    beta1 = th[0] / (2 * eta[0] ** 2) * s[0] * e1
    beta6 = cfg.beta6_sign * th[5] / (2 * eta[5] ** 2) * s[5] * e6

    e2 = x[1] - refs.x2
    e3 = x[2] - beta1
    e4 = x[3] - refs.x4
    e5 = x[4] - beta6
    s[1] = energy(1, e2)
    s[2] = energy(2, e3)
    s[3] = energy(3, e4)
    s[4] = energy(4, e5)

    num1 = th[2] / (2 * eta[2] ** 2) * s[2] * e3 ** 2 + th[1] / (2 * eta[1] ** 2) * s[1] * e2 ** 2
    num2 = th[3] / (2 * eta[3] ** 2) * s[3] * e4 ** 2 + th[4] / (2 * eta[4] ** 2) * s[4] * e5 ** 2
    u1_raw = num1 / _floor_abs(e2 - e3, cfg.eps_den)
    u2_raw = num2 / _floor_abs(e5 - e4, cfg.eps_den)
    _check({"beta1": beta1, "beta6": beta6, "u1": u1_raw, "u2": u2_raw})

    errors = (e1, e2, e3, e4, e5, e6)
    theta = th.copy()
    for k in range(6):
        rate = gam[k] * s[k] * errors[k] ** 2 / (2 * eta[k] ** 2) - pk[k] * theta[k]
        theta[k] = max(0.0, theta[k] + dt * rate)
    if not np.all(np.isfinite(theta)):
        raise ControllerFaultError("theta_hat", theta.tolist())

    lo, hi = ControlConstants.ANC_DUTY_MIN, ControlConstants.ANC_DUTY_MAX
    return (_clamp(u1_raw, lo, hi), _clamp(u2_raw, lo, hi)), AncState(theta=theta)


def anc_theta_bound(k: int, cfg: AncConfig, sup_phi2: float, sup_e2: float) -> float:
    return cfg.gamma[k] * sup_phi2 * sup_e2 / (2 * cfg.eta[k] ** 2 * cfg.p[k])


def uub_error_bound(k: float, p: float, gamma: float, eta: float, eps: float, theta: float,
                    a: float, b_m_min: float, b_M: float) -> float:
    """Ultimate bound on e_i² for the neural controller (analysis helper)."""
    a0 = min((k - 0.5) * b_m_min, p)
    if a0 <= 0:
        raise ValueError("bound needs k > 1/2 and p > 0")
    b0 = 3.0 * (eta ** 2 + eps ** 2 + p / gamma * theta ** 2) + 6.0 * a ** 2
    return b_M * b0 / a0


def anc_uub_bounds(cfg: AncConfig, theta: Sequence[float], b_m_min: float, b_M: float) -> List[float]:
    """uub_error_bound per network with the configured k_i, p_i, γ_i and η_i."""
    return [uub_error_bound(cfg.k[i], cfg.p[i], cfg.gamma[i], cfg.eta[i], cfg.uub_eps, float(theta[i]),
                            cfg.uub_a, b_m_min, b_M) for i in range(6)]
