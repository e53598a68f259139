"""Two-module matrix-variate linear pipeline.

First module ``Y = zeta W + E`` with ``E ~ MN(0, I_N, sigma2 I_J)``; second
module ``zeta = X xi + H`` with ``H ~ MN(0, tau2 I_N, I_L)``.  Under flat
priors on ``xi`` and on the working prior for ``zeta`` the full, two-step and
cut posteriors of ``xi`` are all matrix normal with row covariance
``(X^T X)^{-1}``; they differ in their means and column covariances.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve, qr

from .mvn import DimensionError, MatrixNormal, sample as mn_sample

__all__ = [
    "LinearPipelineConfig",
    "TrueVariances",
    "PosteriorKind",
    "RankDeficientError",
    "QuadratureError",
    "omega",
    "simulate",
    "closed_form_posterior",
    "point_estimators",
    "estimator_sampling_cov",
    "lemma1_quantities",
    "gaussian_kl_pair",
    "LinearFirstModule",
    "LinearSecondModule",
]

log = logging.getLogger(__name__)

RANK_TOL = 1e-10


class RankDeficientError(ValueError):
    """A design matrix is (numerically) rank deficient."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not converge within the refinement budget."""


def _check_rank(A, rank, name):
    # pivoted QR; the leading |R_00| estimates the largest singular value
    R = qr(A, mode="r", pivoting=True)[0]
    d = np.abs(np.diag(R))
    if d.size < rank or d[0] == 0.0 or np.any(d[:rank] <= RANK_TOL * d[0]):
        raise RankDeficientError(f"{name} does not have rank {rank}")


@dataclass(frozen=True)
class LinearPipelineConfig:
    """Designs and fitted variances for the linear pipeline.

    ``W`` is ``L x J`` with full row rank, ``X`` is ``N x K`` with full column
    rank; ``sigma2`` and ``tau2`` are the variances used to fit the model.
    """

    W: np.ndarray
    X: np.ndarray
    sigma2: float
    tau2: float

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.W, dtype=float))
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if W.shape[0] > W.shape[1]:
            raise DimensionError(f"W must be L x J with L <= J, got {W.shape}")
        if X.shape[1] > X.shape[0]:
            raise DimensionError(f"X must be N x K with K <= N, got {X.shape}")
        if not (self.sigma2 > 0 and self.tau2 > 0):
            raise ValueError("sigma2 and tau2 must be strictly positive")
        _check_rank(W.T, W.shape[0], "W")
        _check_rank(X, X.shape[1], "X")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "tau2", float(self.tau2))

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def K(self):
        return self.X.shape[1]

    @property
    def L(self):
        return self.W.shape[0]

    @property
    def J(self):
        return self.W.shape[1]

    def with_variances(self, sigma2, tau2):
        return LinearPipelineConfig(self.W, self.X, sigma2, tau2)


@dataclass(frozen=True)
class TrueVariances:
    sigma2_star: float
    tau2_star: float

    def __post_init__(self):
        if not (self.sigma2_star > 0 and self.tau2_star > 0):
            raise ValueError("true variances must be strictly positive")


class PosteriorKind(enum.Enum):
    FULL = "full"
    TWO_STEP = "twostep"
    CUT = "cut"
    WORKING_FIRST_LEVEL = "working"
    SECOND_CONDITIONAL = "conditional"


def omega(cfg: LinearPipelineConfig, sigma2=None, tau2=None):
    """Marginal column covariance ``sigma2 I_J + tau2 W^T W``."""
    s2 = cfg.sigma2 if sigma2 is None else sigma2
    t2 = cfg.tau2 if tau2 is None else tau2
    return s2 * np.eye(cfg.J) + t2 * (cfg.W.T @ cfg.W)


def simulate(cfg: LinearPipelineConfig, xi_true, true_var: TrueVariances, rng, size=None):
    """Draw ``(Y, zeta)`` from the data-generating process with true variances.

    With ``size`` given, returns stacked arrays of shape ``(size, N, J)`` and
    ``(size, N, L)``.
    """
    xi_true = np.atleast_2d(np.asarray(xi_true, dtype=float))
    if xi_true.shape != (cfg.K, cfg.L):
        raise DimensionError(f"xi must be {cfg.K} x {cfg.L}, got {xi_true.shape}")
    shape_h = (cfg.N, cfg.L) if size is None else (size, cfg.N, cfg.L)
    shape_e = (cfg.N, cfg.J) if size is None else (size, cfg.N, cfg.J)
    H = np.sqrt(true_var.tau2_star) * rng.standard_normal(shape_h)
    zeta = cfg.X @ xi_true + H
    E = np.sqrt(true_var.sigma2_star) * rng.standard_normal(shape_e)
    Y = zeta @ cfg.W + E
    return Y, zeta


class _Factors:
    """Cholesky factors shared by the closed-form expressions."""

    def __init__(self, cfg: LinearPipelineConfig):
        self.cfg = cfg
        self.XtX = cho_factor(cfg.X.T @ cfg.X, lower=True)
        self.WWt = cho_factor(cfg.W @ cfg.W.T, lower=True)
        self.Omega = cho_factor(omega(cfg), lower=True)
        # Omega^{-1} W^T, J x L
        self.OinvWt = cho_solve(self.Omega, cfg.W.T)
        self.G = cho_factor(cfg.W @ self.OinvWt, lower=True)

    def row_cov(self):
        return cho_solve(self.XtX, np.eye(self.cfg.K))

    def wwt_inv(self):
        return cho_solve(self.WWt, np.eye(self.cfg.L))

    def ols(self, Z):
        """``(X^T X)^{-1} X^T Z`` for ``Z`` of shape (N, m) or (R, N, m)."""
        XtZ = np.matmul(self.cfg.X.T, Z)
        if XtZ.ndim == 2:
            return cho_solve(self.XtX, XtZ)
        K = XtZ.shape[1]
        flat = np.moveaxis(XtZ, 1, 0).reshape(K, -1)
        out = cho_solve(self.XtX, flat).reshape(K, XtZ.shape[0], XtZ.shape[2])
        return np.moveaxis(out, 0, 1)

    def right_full(self, Y):
        """``Y Omega^{-1} W^T [W Omega^{-1} W^T]^{-1}``."""
        return _right_solve(self.G, np.matmul(Y, self.OinvWt))

    def right_twostep(self, Y):
        """``Y W^T [W W^T]^{-1}``."""
        return _right_solve(self.WWt, np.matmul(Y, self.cfg.W.T))


def _right_solve(cf, B):
    # B A^{-1} for symmetric A, B of shape (..., m, L)
    shp = B.shape
    flat = B.reshape(-1, shp[-1])
    return cho_solve(cf, flat.T).T.reshape(shp)


def closed_form_posterior(Y, cfg: LinearPipelineConfig, kind: PosteriorKind, zeta=None):
    """Closed-form posterior of the requested kind as a :class:`MatrixNormal`.

    ``WORKING_FIRST_LEVEL`` is the working posterior of ``zeta`` (``N x L``);
    ``SECOND_CONDITIONAL`` is ``p(xi | zeta)`` and requires ``zeta``; the
    remaining kinds are posteriors of ``xi`` (``K x L``).
    """
    kind = PosteriorKind(kind)
    if (zeta is not None) != (kind is PosteriorKind.SECOND_CONDITIONAL):
        raise ValueError("zeta must be supplied exactly when kind is SECOND_CONDITIONAL")
    F = _Factors(cfg)
    if kind is PosteriorKind.SECOND_CONDITIONAL:
        zeta = np.atleast_2d(np.asarray(zeta, dtype=float))
        if zeta.shape != (cfg.N, cfg.L):
            raise DimensionError(f"zeta must be {cfg.N} x {cfg.L}, got {zeta.shape}")
        return MatrixNormal(F.ols(zeta), F.row_cov(), cfg.tau2 * np.eye(cfg.L))

    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape != (cfg.N, cfg.J):
        raise DimensionError(f"Y must be {cfg.N} x {cfg.J}, got {Y.shape}")
    if kind is PosteriorKind.WORKING_FIRST_LEVEL:
        return MatrixNormal(F.right_twostep(Y), np.eye(cfg.N), cfg.sigma2 * F.wwt_inv())
    if kind is PosteriorKind.FULL:
        M = F.ols(F.right_full(Y))
        # precision of the column factor is W Omega^{-1} W^T
        V = cho_solve(F.G, np.eye(cfg.L))
        return MatrixNormal(M, F.row_cov(), V)
    M = F.ols(F.right_twostep(Y))
    if kind is PosteriorKind.TWO_STEP:
        return MatrixNormal(M, F.row_cov(), cfg.tau2 * np.eye(cfg.L))
    V = cfg.sigma2 * F.wwt_inv() + cfg.tau2 * np.eye(cfg.L)
    return MatrixNormal(M, F.row_cov(), V)


class PointEstimates(NamedTuple):
    xi_hat: np.ndarray
    xi_tilde: np.ndarray


def point_estimators(Y, cfg: LinearPipelineConfig) -> PointEstimates:
    """Posterior-mean estimators of ``xi``: full (``xi_hat``) and two-step/cut (``xi_tilde``).

    ``Y`` may be a single ``N x J`` matrix or a stack ``(R, N, J)``.
    """
    F = _Factors(cfg)
    Y = np.asarray(Y, dtype=float)
    return PointEstimates(F.ols(F.right_full(Y)), F.ols(F.right_twostep(Y)))


def estimator_sampling_cov(cfg: LinearPipelineConfig, true_var: TrueVariances, kind):
    """Kronecker factors ``(U, V)`` of the sampling covariance of an estimator.

    ``Cov(vec(estimator)) = V kron U`` when data come from the true variances
    while the estimator uses ``cfg.sigma2`` and ``cfg.tau2``.
    """
    kind = PosteriorKind(kind)
    F = _Factors(cfg)
    U = F.row_cov()
    Omega_star = omega(cfg, true_var.sigma2_star, true_var.tau2_star)
    if kind is PosteriorKind.FULL:
        # A = [W O^-1 W^T]^-1 W O^-1  (L x J)
        A = cho_solve(F.G, F.OinvWt.T)
    elif kind is PosteriorKind.TWO_STEP:
        A = cho_solve(F.WWt, cfg.W)
    else:
        raise ValueError("kind must be FULL or TWO_STEP")
    V = A @ Omega_star @ A.T
    return U, 0.5 * (V + V.T)


# ---------------------------------------------------------------------------
# joint vs zeta-marginal KL for the scalar pipeline

class KLPair(NamedTuple):
    kl_joint: float
    kl_marginal: float
    n_grid: int


def _trapz_weights(n, h):
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _logsumexp_w(logf, w, axis=None):
    m = np.max(logf, axis=axis, keepdims=True)
    s = np.sum(w * np.exp(logf - m), axis=axis, keepdims=True)
    return np.squeeze(np.log(s) + m, axis=axis) if axis is not None else float((np.log(s) + m).item())


def _kl_pair_on_grid(y, w, x, s2, t2, v, n, half_width):
    def logn(z, m, var):
        return -0.5 * (np.log(2 * np.pi * var) + (z - m) ** 2 / var)

    # grid over zeta centred on the working posterior
    z_mean, z_sd = y / w, np.sqrt(s2) / abs(w)
    zg = z_mean + z_sd * np.linspace(-half_width, half_width, n)
    hz = zg[1] - zg[0]
    # sheared grid for xi around the second-module conditional
    prec = x * x / t2 + (0.0 if v is None else 1.0 / v)
    c_mean = (x / t2) * zg / prec
    c_sd = 1.0 / np.sqrt(prec)
    u = np.linspace(-half_width, half_width, n)
    xg = c_mean[:, None] + c_sd * u[None, :]
    hx = c_sd * (u[1] - u[0])
    wz = _trapz_weights(n, hz)
    wx = _trapz_weights(n, hx)

    ell = logn(y, zg * w, s2)  # log p(y | zeta)
    g = logn(zg[:, None], x * xg, t2)  # log p(zeta | xi)
    if v is not None:
        g = g + logn(xg, 0.0, v)
    log_z2 = _logsumexp_w(g, wx[None, :], axis=1)  # log int p(zeta|xi) p(xi) dxi
    log_cond = g - log_z2[:, None]  # log p(xi | zeta)
    log_work = ell - _logsumexp_w(ell, wz)  # log pbar(zeta | y)
    log_zf = _logsumexp_w(ell + log_z2, wz)
    log_full_joint = ell[:, None] + g - log_zf
    log_full_marg = ell + log_z2 - log_zf
    log_cut_joint = log_work[:, None] + log_cond

    pc = np.exp(log_cut_joint)
    kl_joint = float(np.sum(wz[:, None] * wx[None, :] * pc * (log_cut_joint - log_full_joint)))
    pw = np.exp(log_work)
    kl_marg = float(np.sum(wz * pw * (log_work - log_full_marg)))
    return kl_joint, kl_marg


def lemma1_quantities(cfg: LinearPipelineConfig, y, xi_prior_var=None, half_width=12.0,
                      tol=1e-8, max_points=2 ** 13 + 1) -> KLPair:
    """KL divergences between cut and full posteriors for the scalar pipeline.

    Returns ``KL(p_c(zeta, xi | y) || p_f(zeta, xi | y))`` by 2-D quadrature and
    ``KL(pbar(zeta | y) || p_f(zeta | y))`` by 1-D quadrature.  All densities,
    including normalizing constants and the conditional ``p(xi | zeta)``, are
    obtained numerically from the model components.

    ``xi_prior_var`` replaces the flat prior on ``xi`` by ``N(0, xi_prior_var)``.
    Under the flat prior both divergences are exactly zero in the scalar case.

    The trapezoid grid is doubled until successive estimates of both
    quantities differ by less than ``tol``.
    """
    if (cfg.N, cfg.J, cfg.L, cfg.K) != (1, 1, 1, 1):
        raise DimensionError("lemma1_quantities requires N = J = L = K = 1")
    y = float(np.asarray(y).reshape(-1)[0])
    w = float(cfg.W[0, 0])
    x = float(cfg.X[0, 0])
    n = 33
    prev = None
    while n <= max_points:
        cur = _kl_pair_on_grid(y, w, x, cfg.sigma2, cfg.tau2, xi_prior_var, n, half_width)
        if prev is not None and max(abs(cur[0] - prev[0]), abs(cur[1] - prev[1])) < tol:
            return KLPair(max(cur[0], 0.0), max(cur[1], 0.0), n)
        prev = cur
        n = 2 * n - 1
    raise QuadratureError("KL quadrature did not converge")


def _joint_gaussians(Y, cfg: LinearPipelineConfig):
    """Means and covariances of vec(zeta, xi) under the full and cut joints."""
    N, L, K = cfg.N, cfg.L, cfg.K
    X, W = cfg.X, cfg.W
    s2, t2 = cfg.sigma2, cfg.tau2
    nz, nx = N * L, K * L
    # full joint precision over [vec(zeta); vec(xi)] (column-stacked)
    Lzz = np.kron(W @ W.T, np.eye(N)) / s2 + np.eye(nz) / t2
    Lzx = -np.kron(np.eye(L), X) / t2
    Lxx = np.kron(np.eye(L), X.T @ X) / t2
    Lam = np.block([[Lzz, Lzx], [Lzx.T, Lxx]])
    lin = np.concatenate([(Y @ W.T).reshape(-1, order="F") / s2, np.zeros(nx)])
    cf = cho_factor(Lam, lower=True)
    mu_f = cho_solve(cf, lin)
    Sig_f = cho_solve(cf, np.eye(nz + nx))

    work = closed_form_posterior(Y, cfg, PosteriorKind.WORKING_FIRST_LEVEL)
    mz = work.vec_mean()
    Szz = work.vec_cov()
    P = np.kron(np.eye(L), cho_solve(cho_factor(X.T @ X, lower=True), X.T))  # vec(xi) = P vec(zeta) + e
    Se = np.kron(t2 * np.eye(L), cho_solve(cho_factor(X.T @ X, lower=True), np.eye(K)))
    mu_c = np.concatenate([mz, P @ mz])
    Sig_c = np.block([[Szz, Szz @ P.T], [P @ Szz, P @ Szz @ P.T + Se]])
    return (mu_f, Sig_f), (mu_c, Sig_c), nz


def _kl_gauss(m0, S0, m1, S1):
    L1 = np.linalg.cholesky(S1)
    L0 = np.linalg.cholesky(S0)
    A = np.linalg.solve(L1, L0)
    d = np.linalg.solve(L1, m1 - m0)
    k = m0.size
    return 0.5 * (np.sum(A * A) + d @ d - k
                  + 2 * np.sum(np.log(np.diag(L1))) - 2 * np.sum(np.log(np.diag(L0))))


def gaussian_kl_pair(Y, cfg: LinearPipelineConfig):
    """Closed-form ``(KL joint, KL zeta-marginal)`` between cut and full posteriors.

    Works for any (small) dimensions by forming the dense joint Gaussians of
    ``(vec(zeta), vec(xi))``.
    """
    (mf, Sf), (mc, Sc), nz = _joint_gaussians(np.asarray(Y, dtype=float), cfg)
    kl_joint = _kl_gauss(mc, Sc, mf, Sf)
    kl_marg = _kl_gauss(mc[:nz], Sc[:nz, :nz], mf[:nz], Sf[:nz, :nz])
    return float(kl_joint), float(kl_marg)


# ---------------------------------------------------------------------------
# Plug-in modules for the generic engine

@dataclass
class LinearZetaPrior:
    """Conditional prior ``zeta ~ MN(X xi, tau2 I_N, I_L)`` passed to the first module."""

    mean: np.ndarray


class LinearFirstModule:
    """Exact conditional samplers for the first linear module."""

    def __init__(self, Y, cfg: LinearPipelineConfig):
        self.Y = np.atleast_2d(np.asarray(Y, dtype=float))
        self.cfg = cfg
        self._working = closed_form_posterior(self.Y, cfg, PosteriorKind.WORKING_FIRST_LEVEL)
        # conditional of zeta given xi: rows iid with precision W W^T / s2 + I / t2
        prec = cfg.W @ cfg.W.T / cfg.sigma2 + np.eye(cfg.L) / cfg.tau2
        self._cond_cov = np.linalg.inv(prec)
        self._cond_cov = 0.5 * (self._cond_cov + self._cond_cov.T)
        self._cond_chol = np.linalg.cholesky(self._cond_cov)
        self._YWt = self.Y @ cfg.W.T / cfg.sigma2

    def init_state(self, rng):
        return self._working.M.copy()

    def sweep_working(self, state, rng):
        return mn_sample(self._working, rng)

    def sweep_conditional(self, state, zeta_prior: LinearZetaPrior, rng):
        M = (self._YWt + zeta_prior.mean / self.cfg.tau2) @ self._cond_cov
        Z = rng.standard_normal(M.shape)
        return M + Z @ self._cond_chol.T

    def zeta(self, state):
        return state

    def point_estimate(self, working_samples, cfg=None):
        # posterior mean of the working posterior, optimal under squared error
        return self._working.M.copy()

    def trace_values(self, state):
        return {"zeta": state}


class LinearSecondModule:
    """Exact sampler for ``p(xi | zeta)`` under the flat prior."""

    def __init__(self, cfg: LinearPipelineConfig):
        self.cfg = cfg
        self._F = _Factors(cfg)
        self._chol_U = np.linalg.cholesky(self._F.row_cov())
        self._sd = np.sqrt(cfg.tau2)

    def init_state(self, rng):
        return np.zeros((self.cfg.K, self.cfg.L))

    def sweep(self, state, zeta, rng):
        M = self._F.ols(zeta)
        return M + self._sd * (self._chol_U @ rng.standard_normal(M.shape))

    def zeta_prior(self, state):
        return LinearZetaPrior(self.cfg.X @ state)

    def trace_values(self, state):
        return {"xi": state}
