import numpy as np
import pytest

from app.core import numkit
from app.core.exceptions import NumericalError, SingularOperatorError


def test_eig_general_sorts_by_real_part():
    spec = numkit.eig_general([[0.0, 1.0], [-2.0, -3.0]])
    assert spec.max_real == pytest.approx(-1.0)
    assert spec.values.real.tolist() == pytest.approx([-1.0, -2.0])
    assert spec.is_hurwitz


def test_eig_general_matches_characteristic_polynomial():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(5, 5))
    qr = np.sort_complex(numkit.eig_general(a).values)
    roots = np.sort_complex(numkit.charpoly_roots(a))
    assert np.allclose(qr, roots, atol=1e-8)


def test_eig_general_rejects_inaccurate_pair(monkeypatch):
    monkeypatch.setattr(numkit.np.linalg, "eig",
                        lambda a: (np.array([-1.0, -2.0]), np.array([[1.0, 1.0], [0.0, 1.0]])))
    with pytest.raises(NumericalError, match="residual"):
        numkit.eig_general(np.diag([-1.0, -2.0]))


def test_non_square_input_rejected():
    with pytest.raises(NumericalError):
        numkit.eig_general(np.ones((2, 3)))


def test_non_finite_input_rejected():
    with pytest.raises(NumericalError):
        numkit.as_matrix([[1.0, np.nan]])


def test_symmetrize_rejects_asymmetric():
    with pytest.raises(NumericalError):
        numkit.symmetrize([[1.0, 2.0], [0.0, 1.0]])


def test_symmetric_extremes():
    s = np.diag([3.0, -1.0, 2.0])
    assert numkit.eig_sym_max(s) == pytest.approx(3.0)
    assert numkit.eig_sym_min(s) == pytest.approx(-1.0)
    lam, v = numkit.eig_sym_max_vec(s)
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert abs(v[0]) == pytest.approx(1.0)


def test_definiteness():
    assert numkit.is_negative_definite(-np.eye(3))
    assert not numkit.is_negative_definite(np.diag([-1.0, 0.0]))
    assert numkit.is_positive_definite(np.eye(2))


def test_spectral_norm():
    assert numkit.spectral_norm([[3.0, 0.0], [0.0, -4.0]]) == pytest.approx(4.0)
    assert numkit.spectral_norm(np.zeros((2, 2))) == 0.0


def test_solve_lyapunov_identity():
    p = numkit.solve_lyapunov(-np.eye(3), 2.0 * np.eye(3))
    assert np.allclose(p, np.eye(3))


def test_solve_lyapunov_residual():
    a = np.array([[-1.0, 2.0], [0.0, -3.0]])
    q = np.array([[2.0, 0.5], [0.5, 1.0]])
    p = numkit.solve_lyapunov(a, q)
    assert np.allclose(a.T @ p + p @ a, -q, atol=1e-10)
    assert np.allclose(p, p.T)


def test_solve_lyapunov_singular_operator():
    with pytest.raises(SingularOperatorError):
        numkit.solve_lyapunov(np.diag([1.0, -1.0]), np.eye(2))


def test_block_diag():
    out = numkit.block_diag(np.eye(2), [[5.0]])
    assert out.shape == (3, 3)
    assert out[2, 2] == 5.0 and out[0, 2] == 0.0
