"""Averaged DC microgrid plant models and the single-diode PV array."""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from ..constants.app_constants import NumConstants
from ..core.exceptions import ConvergenceError, NumericalError
from ..models.config_models import DcParams, PvCell
from ..models.plant_models import (
    Atmosphere, HessDisturbance, PvBatDisturbance, RefSet
)

logger = logging.getLogger(__name__)

Q_ELECTRON = 1.602176634e-19
K_BOLTZMANN = 1.380649e-23
EXP_CLIP = 700.0


@dataclass(frozen=True)
class PvCurve:
    """Single-diode constants frozen at one (G, T)."""
    i_ph: float
    i_s: float
    v_t: float
    r_s: float
    r_sh: float
    n_p: float

    def residual(self, v: float, i: float) -> Tuple[float, float]:
        vd = v + i * self.r_s
        ex = math.exp(min(vd / self.v_t, EXP_CLIP))
        f = i - self.n_p * self.i_ph + self.n_p * self.i_s * (ex - 1.0) + vd / self.r_sh
        df = 1.0 + self.n_p * self.i_s * self.r_s / self.v_t * ex + self.r_s / self.r_sh
        return f, df

    def current(self, v: float, guess: Optional[float] = None) -> float:
        if v < 0:
            raise NumericalError(f"pv voltage must be >= 0, got {v}")
        hi = self.n_p * self.i_ph
        lo = 0.0
        f_lo, _ = self.residual(v, lo)
        # above V_oc the root is negative
        step = max(hi, 1.0)
        while f_lo > 0.0:
            lo -= step
            step *= 2.0
            f_lo, _ = self.residual(v, lo)
            if lo < -1e6:
                raise ConvergenceError(f"could not bracket pv current at v={v}")
        if hi < lo:
            hi = lo

        i = hi if guess is None else min(max(guess, lo), hi)
        for _ in range(NumConstants.PV_MAX_NEWTON):
            f, df = self.residual(v, i)
            if abs(f) <= NumConstants.PV_TOL:
                return i
            if f > 0.0:
                hi = i
            else:
                lo = i
            nxt = i - f / df
            if not lo <= nxt <= hi:
                nxt = 0.5 * (lo + hi)
            i = nxt
        f, _ = self.residual(v, i)
        if abs(f) <= 10 * NumConstants.PV_TOL:
            return i
        raise ConvergenceError(f"pv current did not converge at v={v} (residual {f:.3e})")


def pv_curve(atmos: Atmosphere, cell: PvCell) -> PvCurve:
    t = atmos.temperature + 273.15
    t_ref = cell.t_ref_c + 273.15
    i_ph = (cell.i_sc + cell.k_i * (t - t_ref)) * atmos.irradiance / cell.g_ref
    i_s = cell.i_s_ref * (t / t_ref) ** 3 * math.exp(
        Q_ELECTRON * cell.e_g / (cell.ideality * K_BOLTZMANN) * (1.0 / t_ref - 1.0 / t))
    v_t = cell.n_s * cell.ideality * K_BOLTZMANN * t / Q_ELECTRON
    return PvCurve(i_ph=max(i_ph, 0.0), i_s=i_s, v_t=v_t, r_s=cell.r_s, r_sh=cell.r_sh, n_p=cell.n_p)


def pv_current(v_pv: float, atmos: Atmosphere, cell: PvCell) -> float:
    return pv_curve(atmos, cell).current(v_pv)


def open_circuit_voltage(atmos: Atmosphere, cell: PvCell) -> float:
    curve = pv_curve(atmos, cell)
    if curve.i_ph <= 0.0:
        return 0.0
    hi = curve.v_t
    while curve.current(hi) > 0.0:
        hi *= 1.5
    return float(optimize.brentq(lambda v: curve.current(v), 0.0, hi, xtol=1e-10))


def mpp_point(atmos: Atmosphere, cell: PvCell) -> Tuple[float, float, float]:
    """Maximum power point (v, i, p) of the array at the given atmosphere."""
    curve = pv_curve(atmos, cell)
    v_oc = open_circuit_voltage(atmos, cell)
    if v_oc <= 0.0:
        return 0.0, 0.0, 0.0
    res = optimize.minimize_scalar(lambda v: -v * curve.current(v), bounds=(0.0, v_oc),
                                   method="bounded", options={"xatol": 1e-7})
    v = float(res.x)
    i = curve.current(v)
    return v, i, v * i


def hess_rates(x: Sequence[float], u: Sequence[float], d: Sequence[float], p: DcParams) -> Tuple[float, ...]:
    x1, x2, x3, x4, x5, x6, x7, x8, x9 = x
    u1, u2, u3 = u
    d1, d2, d3, d4 = d
    z = 1.0 / p.r_pvo + 1.0 / p.r_bo + 1.0 / p.r_sco
    return (
        (d1 - x3) / p.c_pvi,
        x3 / p.c_pvo + (x9 - x2) / (p.r_pvo * p.c_pvo) - x3 * u1 / p.c_pvo,
        (x1 - x2 - p.r_pv * x3 + x2 * u1) / p.l_pv,
        (d2 - x4) / (p.r_bi * p.c_bi) - x6 / p.c_bi,
        x6 / p.c_bo + (x9 - x5) / (p.r_bo * p.c_bo) - x6 * u2 / p.c_bo,
        (x4 - x5 - p.r_b * x6 + x5 * u2) / p.l_b,
        (-x8 - p.r_sc * x7 + d3 * u3) / p.l_sc,
        x7 / p.c_sco + (x9 - x8) / (p.r_sco * p.c_sco),
        (x2 / p.r_pvo + x5 / p.r_bo + x8 / p.r_sco - x9 * z - x9 * d4) / p.c_l,
    )


def hess_derivatives(x, u, d: HessDisturbance, params: DcParams) -> np.ndarray:
    return np.array(hess_rates(list(x), list(u), (d.d1, d.d2, d.d3, d.d4), params))


def pvbat_rates(x: Sequence[float], u: Sequence[float], D: Sequence[float], p: DcParams) -> Tuple[float, ...]:
    x1, x2, x3, x4, x5, x6 = x
    u1, u2 = u
    D1, D2, D3 = D
    g1 = 1.0 / p.c_pvi
    g2 = x3 / p.c_pvo
    g3 = x2 / p.l_pv
    g4 = x5 / p.l_b
    g5 = x4 / p.c_bo
    g6 = 1.0 / (p.c_l * p.r_bo)
    c6 = -x6
    return (
        -g1 * x3 + D1,
        x3 / p.c_pvo - x2 / (p.r_pvo * p.c_pvo) + x6 / (p.r_pvo * p.c_pvo) - g2 * u1,
        x1 / p.l_pv - x2 / p.l_pv - x3 * p.r_pv / p.l_pv + g3 * u1,
        D2 - x4 * p.r_b / p.l_b - x5 / p.l_b + g4 * u2,
        x4 / p.c_bo - x5 / (p.r_bo * p.c_bo) + x6 / (p.r_bo * p.c_bo) - g5 * u2,
        x2 / (p.c_l * p.r_pvo) - x6 / (p.c_l * p.r_pvo) - x6 / (p.c_l * p.r_bo) + g6 * x5 + c6 * D3,
    )


def pvbat_derivatives(x, u, D: PvBatDisturbance, params: DcParams) -> np.ndarray:
    return np.array(pvbat_rates(list(x), list(u), (D.D1, D.D2, D.D3), params))


def supercap_rate(u_c: float, i_sc: float, params: DcParams) -> float:
    leak = 0.0 if params.r_p is None else u_c / (params.c_sc * params.r_p)
    return -leak + i_sc / params.c_sc


def supercap_step(u_c: float, i_sc: float, params: DcParams, dt: float) -> Tuple[float, float]:
    if dt <= 0:
        raise NumericalError("dt must be positive")
    k1 = supercap_rate(u_c, i_sc, params)
    k2 = supercap_rate(u_c + 0.5 * dt * k1, i_sc, params)
    k3 = supercap_rate(u_c + 0.5 * dt * k2, i_sc, params)
    k4 = supercap_rate(u_c + dt * k3, i_sc, params)
    u_next = u_c + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return u_next, u_next + i_sc * params.r_s_sc


def hess_equilibrium(refs: RefSet, d: HessDisturbance, params: DcParams) -> Tuple[np.ndarray, np.ndarray]:
    """State and duties that hold the 9-state model at a consistent RefSet."""
    x = refs.as_array(9)
    x[6] = 0.0
    u1 = 1.0 - (x[0] - params.r_pv * x[2]) / x[1]
    u2 = 1.0 - (x[3] - params.r_b * x[5]) / x[4]
    u3 = (x[7] + params.r_sc * x[6]) / d.d3
    return x, np.array([u1, u2, u3])


def pvbat_equilibrium(refs: RefSet, params: DcParams) -> Tuple[np.ndarray, np.ndarray]:
    x = refs.as_array(6)
    u1 = 1.0 - (x[0] - params.r_pv * x[2]) / x[1]
    u2 = 1.0 - (params.v_b - params.r_b * x[3]) / x[4]
    return x, np.array([u1, u2])


def steady_state(u, d: HessDisturbance, params: DcParams, x_guess) -> np.ndarray:
    """Root of the 9 averaged equations at fixed duties and disturbances."""
    sol = optimize.root(lambda x: hess_derivatives(x, u, d, params), np.asarray(x_guess, dtype=float),
                        method="hybr", tol=1e-13)
    if not sol.success:
        logger.error(f"Steady-state solve error: {sol.message}")
        raise ConvergenceError(f"steady-state root finding failed: {sol.message}")
    return sol.x


def energy_balance(x, u, d: HessDisturbance, params: DcParams) -> Tuple[float, float]:
    """(sources, sinks) in watts; equal at any steady state of the 9-state model."""
    x1, x2, x3, x4, x5, x6, x7, x8, x9 = x
    p = params
    i_bat = (d.d2 - x4) / p.r_bi
    sources = d.d1 * x1 + d.d2 * i_bat + d.d3 * u[2] * x7
    i_pvo = (x2 - x9) / p.r_pvo
    i_bo = (x5 - x9) / p.r_bo
    i_sco = (x8 - x9) / p.r_sco
    losses = (p.r_pv * x3 ** 2 + p.r_pvo * i_pvo ** 2 + p.r_bi * i_bat ** 2 + p.r_b * x6 ** 2
              + p.r_bo * i_bo ** 2 + p.r_sc * x7 ** 2 + p.r_sco * i_sco ** 2)
    sinks = x9 ** 2 * d.d4 + losses
    return sources, sinks
