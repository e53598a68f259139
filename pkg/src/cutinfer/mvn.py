"""Matrix-variate normal distributions.

A random ``n x p`` matrix ``X ~ MN(M, U, V)`` has ``vec(X) ~ N(vec(M), V kron U)``
where ``U`` is the ``n x n`` row covariance and ``V`` the ``p x p`` column
covariance.  Every computation goes through Cholesky factors; no explicit
inverse is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

__all__ = [
    "DimensionError",
    "NotPositiveDefiniteError",
    "MatrixNormal",
    "spd_cholesky",
    "log_density",
    "sample",
    "transform",
    "convolve",
]

SYMMETRY_TOL = 1e-10
PIVOT_TOL = 1e-13
LOG_2PI = np.log(2.0 * np.pi)


class DimensionError(ValueError):
    """Raised when array shapes are inconsistent."""


class NotPositiveDefiniteError(ValueError):
    """Raised when a covariance matrix fails the SPD factorization."""


def spd_cholesky(A, name="matrix"):
    """Symmetrize ``A`` and return ``(A_sym, L)`` with ``L`` lower-triangular.

    The asymmetry ``max|A - A^T|`` must not exceed ``1e-10`` relative to the
    largest entry.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if A.size and np.max(np.abs(A - A.T)) > SYMMETRY_TOL * scale:
        raise NotPositiveDefiniteError(f"{name} is not symmetric")
    A = 0.5 * (A + A.T)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(f"{name} is not positive definite") from exc
    # squared pivots below PIVOT_TOL relative to the largest entry count as singular
    d = np.diag(L)
    if not np.all(np.isfinite(L)) or (d.size and d.min() ** 2 <= PIVOT_TOL * np.abs(A).max()):
        raise NotPositiveDefiniteError(f"{name} is not positive definite")
    return A, L


@dataclass(frozen=True)
class MatrixNormal:
    """Matrix-variate normal ``MN(M, U, V)``.

    Parameters
    ----------
    M : (n, p) array
        Mean matrix.
    U : (n, n) array
        Row covariance, symmetric positive definite.
    V : (p, p) array
        Column covariance, symmetric positive definite.
    """

    M: np.ndarray
    U: np.ndarray
    V: np.ndarray
    chol_U: np.ndarray = field(init=False, repr=False, compare=False)
    chol_V: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        U, LU = spd_cholesky(np.atleast_2d(self.U), "U")
        V, LV = spd_cholesky(np.atleast_2d(self.V), "V")
        if M.shape != (U.shape[0], V.shape[0]):
            raise DimensionError(
                f"mean shape {M.shape} inconsistent with U {U.shape} and V {V.shape}"
            )
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "chol_U", LU)
        object.__setattr__(self, "chol_V", LV)

    @property
    def shape(self):
        return self.M.shape

    def vec_mean(self):
        """Column-stacked mean ``vec(M)``."""
        return self.M.reshape(-1, order="F")

    def vec_cov(self):
        """Dense covariance ``V kron U`` of ``vec(X)``; for small problems only."""
        return np.kron(self.V, self.U)


def log_density(X, d: MatrixNormal) -> float:
    """Log-density of ``d`` at the matrix ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape != d.shape:
        raise DimensionError(f"X has shape {X.shape}, expected {d.shape}")
    n, p = d.shape
    R = X - d.M
    # L_U^{-1} R L_V^{-T}
    A = solve_triangular(d.chol_U, R, lower=True)
    A = solve_triangular(d.chol_V, A.T, lower=True).T
    logdet_U = 2.0 * np.sum(np.log(np.diag(d.chol_U)))
    logdet_V = 2.0 * np.sum(np.log(np.diag(d.chol_V)))
    return float(
        -0.5 * n * p * LOG_2PI - 0.5 * p * logdet_U - 0.5 * n * logdet_V - 0.5 * np.sum(A * A)
    )


def sample(d: MatrixNormal, rng: np.random.Generator, size=None):
    """Draw ``M + L_U Z L_V^T`` with iid standard normal ``Z``.

    Returns an ``(n, p)`` array, or ``(size, n, p)`` when ``size`` is given.
    """
    n, p = d.shape
    if size is None:
        Z = rng.standard_normal((n, p))
        return d.M + d.chol_U @ Z @ d.chol_V.T
    Z = rng.standard_normal((size, n, p))
    return d.M + np.matmul(np.matmul(d.chol_U, Z), d.chol_V.T)


def transform(D, d: MatrixNormal, C) -> MatrixNormal:
    """Distribution of ``D X C`` for ``X ~ d``: ``MN(D M C, D U D^T, C^T V C)``."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n, p = d.shape
    if D.shape[1] != n or C.shape[0] != p:
        raise DimensionError(
            f"cannot form D X C with D {D.shape}, X {d.shape}, C {C.shape}"
        )
    return MatrixNormal(D @ d.M @ C, D @ d.U @ D.T, C.T @ d.V @ C)


def convolve(d1: MatrixNormal, d2: MatrixNormal, shared="column") -> MatrixNormal:
    """Distribution of ``X1 + X2`` for independent terms sharing one covariance.

    ``shared="column"`` requires ``V1 == V2`` and adds the row covariances;
    ``shared="row"`` requires ``U1 == U2`` and adds the column covariances.
    """
    if d1.shape != d2.shape:
        raise DimensionError(f"shapes differ: {d1.shape} vs {d2.shape}")
    if shared == "column":
        if not np.allclose(d1.V, d2.V, rtol=0.0, atol=SYMMETRY_TOL):
            raise ValueError("column covariances differ")
        return MatrixNormal(d1.M + d2.M, d1.U + d2.U, d1.V)
    if shared == "row":
        if not np.allclose(d1.U, d2.U, rtol=0.0, atol=SYMMETRY_TOL):
            raise ValueError("row covariances differ")
        return MatrixNormal(d1.M + d2.M, d1.U, d1.V + d2.V)
    raise ValueError(f"shared must be 'row' or 'column', got {shared!r}")


def cho_inv_apply(L, B):
    """Solve ``A x = B`` given the lower Cholesky factor ``L`` of ``A``."""
    return cho_solve((L, True), B)
