"""Linear model of the n-bus feeder and its closed loops under static state feedback."""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from ..core import numkit
from ..core.exceptions import ConfigError, SingularOperatorError
from ..models.config_models import FeederConfig, WorkbenchConfig

logger = logging.getLogger(__name__)

MATRIX_PREFIXES = ("feeder:", "published:")


@dataclass(frozen=True)
class FeederSystem:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    m: np.ndarray

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass
class Zone:
    index: int
    sweep_lo: float
    sweep_hi: float
    eig_lo: float
    eig_hi: float
    worst_value: float
    worst_max_real: float
    worst_a: np.ndarray


@dataclass
class ZoneChart:
    parameter: str
    grid: List[Tuple[float, float]] = field(default_factory=list)
    zones: List[Zone] = field(default_factory=list)


def _legs(cfg: FeederConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    r = np.array(list(cfg.r) + [cfg.r_load], dtype=float)
    l = np.array(list(cfg.l) + [cfg.l_load], dtype=float)
    return r, l, np.array(cfg.l_c, dtype=float)


def feeder_blocks(cfg: FeederConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Nodal-analysis blocks (T, T1, T2, T3); row i uses line i, the last row the load leg."""
    r, l, l_c = _legs(cfg)
    n = len(r)
    t = np.zeros((n, n))
    t1 = np.zeros((n, n))
    t3 = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            t[i, j] = l[i] / l_c[j]
            t1[i, j] = -r[i] / l_c[j]
            t3[i, j] = l[i] / l_c[j]
        t[i, i] += 1.0
        if i + 1 < n:
            t[i, i + 1] = -1.0
    return t, t1, -t1, t3


def build_feeder(cfg: FeederConfig) -> FeederSystem:
    t, t1, t2, t3 = feeder_blocks(cfg)
    if abs(np.linalg.det(t)) < 1e-12 * max(1.0, np.linalg.norm(t, 2)) ** t.shape[0]:
        raise SingularOperatorError("feeder T matrix is singular")
    try:
        a_prime = np.linalg.solve(t, t1)
        b_prime = np.linalg.solve(t, t2)
        m_prime = np.linalg.solve(t, t3)
    except np.linalg.LinAlgError as e:
        logger.error(f"Feeder build error: {str(e)}")
        raise SingularOperatorError(f"feeder T matrix is singular: {e}") from e
    b = a_prime @ m_prime + b_prime
    return FeederSystem(a=a_prime, b=b, c=np.eye(t.shape[0]), m=m_prime)


def closed_loop(a, b, k) -> np.ndarray:
    a, b, k = numkit.as_matrix(a, "a"), numkit.as_matrix(b, "b"), numkit.as_matrix(k, "k")
    if b.shape[1] != k.shape[0] or k.shape[1] != a.shape[0] or b.shape[0] != a.shape[0]:
        raise ValueError(f"dimension mismatch: A{a.shape} B{b.shape} K{k.shape}")
    return a + b @ k


def delay_closed_loop(a, b, k, d) -> np.ndarray:
    """First-order small-delay closed loop (I - B(D∘K))(A + BK).

    ``d[i, j]`` is the delay on the link from sensor j to controller i, aligned with ``k[i, j]``.
    """
    a_k = closed_loop(a, b, k)
    dk = numkit.as_matrix(d, "d") * numkit.as_matrix(k, "k")
    if np.any(np.asarray(d) < 0):
        raise ValueError("delays must be >= 0")
    return (np.eye(a_k.shape[0]) - numkit.as_matrix(b) @ dk) @ a_k


def alpha_bound(rho: float, a, b, d, m: Optional[int] = None, n: Optional[int] = None) -> float:
    """Norm bound on the delay-induced perturbation of the closed loop."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    a, b = numkit.as_matrix(a, "a"), numkit.as_matrix(b, "b")
    m = m if m is not None else b.shape[1]
    n = n if n is not None else a.shape[0]
    max_d = float(np.max(d)) if np.size(d) else 0.0
    if max_d <= 0.0:
        return 0.0
    nb = numkit.spectral_norm(b)
    return float(np.sqrt(m * n) * rho * nb * (numkit.spectral_norm(a) + nb * rho) * max_d)


def zone_chart(template: FeederConfig, values: Sequence[float], n_zones: int,
               parameter: str = "r_load") -> ZoneChart:
    if not len(values):
        raise ValueError("sweep range is empty")
    if n_zones < 1:
        raise ValueError("n_zones must be >= 1")
    if parameter not in ("r_load", "l_load"):
        raise ConfigError(f"cannot sweep '{parameter}'; valid: r_load, l_load")

    chart = ZoneChart(parameter=parameter)
    mats = []
    for v in sorted(float(x) for x in values):
        a = build_feeder(template.model_copy(update={parameter: v})).a
        chart.grid.append((v, numkit.eig_general(a).max_real))
        mats.append(a)

    eigs = np.array([g[1] for g in chart.grid])
    lo, hi = float(eigs.min()), float(eigs.max())
    span = hi - lo
    if span <= 1e-12 * max(1.0, abs(hi)):
        labels = np.zeros(len(eigs), dtype=int)
        edges = np.array([lo, hi])
    else:
        edges = np.linspace(lo, hi, n_zones + 1)
        labels = np.clip(np.searchsorted(edges, eigs, side="right") - 1, 0, n_zones - 1)

    # contiguous runs of one band; a band met again later in the sweep opens a new zone
    runs: List[List[int]] = []
    for idx, label in enumerate(labels):
        if runs and labels[runs[-1][-1]] == label:
            runs[-1].append(idx)
        else:
            runs.append([idx])
    for z, idxs in enumerate(runs):
        worst = max(idxs, key=lambda i: chart.grid[i][1])
        label = int(labels[idxs[0]])
        chart.zones.append(Zone(
            index=z,
            sweep_lo=chart.grid[idxs[0]][0],
            sweep_hi=chart.grid[idxs[-1]][0],
            eig_lo=float(edges[label]),
            eig_hi=float(edges[min(label + 1, len(edges) - 1)]),
            worst_value=chart.grid[worst][0],
            worst_max_real=chart.grid[worst][1],
            worst_a=mats[worst],
        ))
    logger.info(f"Zone chart over {parameter}: {len(chart.grid)} points, {len(chart.zones)} zones")
    return chart


def simulate_delay_oracle(a, b, k, d, x0, horizon: float, dt: float = 1e-5) -> Tuple[np.ndarray, np.ndarray]:
    """Method-of-steps RK4 for x' = Ax + B u, u_i(t) = sum_j K_ij x_j(t - d_ij).

    History before t = 0 is held at x0; delayed samples are linearly interpolated.
    """
    a, b, k, d = (numkit.as_matrix(v) for v in (a, b, k, d))
    x0 = np.asarray(x0, dtype=float)
    n_steps = int(round(horizon / dt))
    xs = np.zeros((n_steps + 1, a.shape[0]))
    xs[0] = x0
    nz = [(i, j) for i in range(k.shape[0]) for j in range(k.shape[1]) if k[i, j] != 0.0]

    def delayed(t: float, j: int, stage_x: np.ndarray, t_known: float) -> float:
        s = t
        if s >= t_known:
            return stage_x[j]
        if s <= 0.0:
            return x0[j]
        pos = s / dt
        lo = int(np.floor(pos))
        w = pos - lo
        return (1.0 - w) * xs[lo, j] + w * xs[min(lo + 1, n_steps), j]

    def rhs(t: float, x: np.ndarray, t_known: float) -> np.ndarray:
        u = np.zeros(k.shape[0])
        for i, j in nz:
            u[i] += k[i, j] * delayed(t - d[i, j], j, x, t_known)
        return a @ x + b @ u

    for step in range(n_steps):
        t = step * dt
        x = xs[step]
        k1 = rhs(t, x, t)
        k2 = rhs(t + 0.5 * dt, x + 0.5 * dt * k1, t)
        k3 = rhs(t + 0.5 * dt, x + 0.5 * dt * k2, t)
        k4 = rhs(t + dt, x + dt * k3, t)
        xs[step + 1] = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return np.arange(n_steps + 1) * dt, xs


def simulate_linear(a_bar, x0, horizon: float, dt: float = 1e-5) -> Tuple[np.ndarray, np.ndarray]:
    """Exact samples of x' = Ā x on the oracle grid."""
    a_bar = numkit.as_matrix(a_bar)
    n_steps = int(round(horizon / dt))
    phi = expm(a_bar * dt)
    xs = np.zeros((n_steps + 1, a_bar.shape[0]))
    xs[0] = np.asarray(x0, dtype=float)
    for step in range(n_steps):
        xs[step + 1] = phi @ xs[step]
    return np.arange(n_steps + 1) * dt, xs


def resolve_matrix(ref: str, cfg: WorkbenchConfig, part: str = "a") -> np.ndarray:
    """Turn a config reference ("feeder:<name>" or "published:<key>") into a matrix."""
    if ref.startswith("feeder:"):
        name = ref[len("feeder:"):]
        if name not in cfg.feeders:
            raise ConfigError(f"unknown feeder '{name}'; valid: {', '.join(sorted(cfg.feeders))}")
        system = build_feeder(cfg.feeders[name])
        if part not in ("a", "b"):
            raise ConfigError(f"feeder reference part must be 'a' or 'b', got '{part}'")
        return getattr(system, part)
    if ref.startswith("published:"):
        key = ref[len("published:"):]
        if key not in cfg.published.matrices:
            raise ConfigError(f"unknown published matrix '{key}'")
        return numkit.as_matrix(cfg.published.matrices[key], key)
    raise ConfigError(f"matrix reference '{ref}' must start with one of {MATRIX_PREFIXES}")
