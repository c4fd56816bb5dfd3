"""Small dense real-matrix kernel shared by the synthesis and feeder services."""
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import linalg

from ..constants.app_constants import NumConstants
from .exceptions import NumericalError, SingularOperatorError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    max_real: float

    @property
    def is_hurwitz(self) -> bool:
        return self.max_real < 0.0


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    arr = np.array(m, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise NumericalError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} has non-finite entries")
    return arr


def _require_square(m: np.ndarray, name: str) -> None:
    if m.shape[0] != m.shape[1]:
        raise NumericalError(f"{name} must be square, got shape {m.shape}")
    if m.shape[0] > NumConstants.MAX_DIM:
        raise NumericalError(f"{name} dimension {m.shape[0]} exceeds {NumConstants.MAX_DIM}")


def eig_general(m) -> Spectrum:
    a = as_matrix(m)
    _require_square(a, "eig_general input")
    try:
        values, vectors = np.linalg.eig(a)
    except np.linalg.LinAlgError as e:
        logger.error(f"Eigen solver error: {str(e)}")
        raise NumericalError(f"eigenvalue iteration did not converge: {e}") from e

    # 검증 패스
    scale = max(np.linalg.norm(a, 2), 1.0)
    for k in range(len(values)):
        v = vectors[:, k]
        residual = np.linalg.norm(a @ v - values[k] * v)
        if residual > 1e-8 * scale * max(np.linalg.norm(v), 1.0):
            logger.error(f"Eigen solver error: pair {k} residual {residual:.3e} above tolerance")
            raise NumericalError(f"eigenpair {k} residual {residual:.3e} exceeds 1e-8·‖A‖")

    order = np.lexsort((values.imag, -values.real))
    values = values[order]
    return Spectrum(values=values, max_real=float(np.max(values.real)))


def charpoly_roots(m) -> np.ndarray:
    """Eigenvalues through the characteristic polynomial (independent oracle)."""
    a = as_matrix(m)
    _require_square(a, "charpoly_roots input")
    coeffs = np.poly(a)
    return np.roots(coeffs)


def symmetrize(s, tol: float = NumConstants.SYM_TOL) -> np.ndarray:
    a = as_matrix(s)
    _require_square(a, "symmetric input")
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    scale = max(1.0, np.max(np.abs(a))) if a.size else 1.0
    if asym > tol * scale:
        raise NumericalError(f"matrix asymmetry {asym:.3e} exceeds tolerance {tol:.1e}")
    return 0.5 * (a + a.T)


def eig_sym_max_vec(s) -> Tuple[float, np.ndarray]:
    a = symmetrize(s)
    values, vectors = linalg.eigh(a)
    v = vectors[:, -1]
    return float(values[-1]), v / np.linalg.norm(v)


def eig_sym_max(s) -> float:
    return eig_sym_max_vec(s)[0]


def eig_sym_min(s) -> float:
    a = symmetrize(s)
    return float(linalg.eigvalsh(a)[0])


def is_negative_definite(s, margin: float = NumConstants.NEG_DEF_MARGIN) -> bool:
    return eig_sym_max(s) <= -margin


def is_positive_definite(s, margin: float = NumConstants.NEG_DEF_MARGIN) -> bool:
    return eig_sym_min(s) >= margin


def spectral_norm(m) -> float:
    a = as_matrix(m)
    if a.size == 0:
        return 0.0
    top = eig_sym_max(a.T @ a)
    return float(np.sqrt(max(top, 0.0)))


def solve_lyapunov(a, q) -> np.ndarray:
    """Solve AᵀP + PA = -Q for symmetric P."""
    am = as_matrix(a, "a")
    _require_square(am, "a")
    qm = symmetrize(q)
    if qm.shape != am.shape:
        raise NumericalError(f"q shape {qm.shape} does not match a shape {am.shape}")

    lam = np.linalg.eigvals(am)
    sums = np.abs(lam[:, None] + lam[None, :])
    scale = max(np.max(np.abs(lam)), 1.0)
    if np.min(sums) <= NumConstants.EIG_SUM_TOL * scale:
        raise SingularOperatorError(
            f"Lyapunov operator singular: eigenvalue pair sums to {np.min(sums):.3e}")

    p = linalg.solve_continuous_lyapunov(am.T, -qm)
    p = 0.5 * (p + p.T)

    residual = np.linalg.norm(am.T @ p + p @ am + qm, 'fro')
    q_norm = max(np.linalg.norm(qm, 'fro'), 1e-300)
    if residual > NumConstants.LYAP_RESIDUAL * q_norm * max(1.0, np.linalg.norm(p, 'fro')):
        raise SingularOperatorError(
            f"Lyapunov residual {residual:.3e} too large (ill-conditioned shift)")
    return p


def block_diag(*blocks) -> np.ndarray:
    return linalg.block_diag(*[as_matrix(b) for b in blocks])
