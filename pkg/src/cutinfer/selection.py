"""Second module: logistic regression of bridging indicators with variable selection.

``zeta_i ~ Bernoulli(sigmoid(eta0 + x_i^T eta))`` with a Beta-Bernoulli prior
on the inclusion indicators ``xi``, a unit-information slab
``eta_xi ~ N(0, 4N (X_xi^T X_xi)^{-1})`` and a standard logistic prior on the
intercept.  The logistic prior equals ``sigmoid(eta0) sigmoid(-eta0)``, so it
is represented exactly by two intercept-only pseudo-observations (one success,
one failure) and the whole conditional is Polya-Gamma augmentable.

One Metropolis-within-Gibbs sweep draws the Polya-Gamma auxiliaries, proposes
single flips of ``xi_k`` in random order with ``(eta0, eta_xi)`` integrated
out, and finally draws ``(eta0, eta_xi)`` from their Gaussian conditional.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy.special import expit, gammaln

from .polya_gamma import pg_draw

__all__ = [
    "CovariateMatrix",
    "SelectState",
    "bridge_prob",
    "log_prior_xi",
    "log_prior_eta_given_xi",
    "working_prior_logprob",
    "log_marginal_given_pg",
    "mwg_sweep",
    "mwg_chain",
    "init_select_state",
    "sample_zeta_prior",
    "SelectionSecondModule",
]

log = logging.getLogger(__name__)

SLAB_SCALE = 4.0
SINGULAR_TOL = 1e-10


@dataclass(frozen=True)
class CovariateMatrix:
    """Covariates for the selection module.

    Columns are standardized to mean 0 and variance 1 unless
    ``standardize=False``.  ``K = 0`` is allowed (intercept-only model).
    """

    X: np.ndarray
    names: tuple = ()
    standardize: bool = True
    center: np.ndarray = field(init=False, repr=False)
    scale: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError("X must be a 2-D array")
        N, K = X.shape
        names = tuple(self.names) if self.names else tuple(f"x{k + 1}" for k in range(K))
        if len(names) != K:
            raise ValueError(f"got {len(names)} names for {K} covariates")
        if not np.all(np.isfinite(X)):
            raise ValueError("covariates must be finite")
        center = np.zeros(K)
        scale = np.ones(K)
        if self.standardize and K:
            center = X.mean(axis=0)
            scale = X.std(axis=0)
            if np.any(scale == 0):
                raise ValueError("constant covariate column cannot be standardized")
            X = (X - center) / scale
        if K:
            sv = np.linalg.svd(X, compute_uv=False)
            if K > N or sv[-1] <= SINGULAR_TOL * sv[0]:
                raise ValueError("covariate matrix does not have full column rank")
        object.__setattr__(self, "X", np.ascontiguousarray(X))
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "scale", scale)

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def K(self):
        return self.X.shape[1]


@dataclass
class SelectState:
    """State of the second-module chain.

    ``eta[k] == 0`` exactly whenever ``xi[k] == 0``; ``pg_aux`` holds the
    ``N`` data auxiliaries followed by the two intercept pseudo-observations.
    """

    xi: np.ndarray
    eta0: float
    eta: np.ndarray
    pg_aux: np.ndarray

    def copy(self):
        return SelectState(self.xi.copy(), float(self.eta0), self.eta.copy(), self.pg_aux.copy())


def bridge_prob(eta0, eta, x):
    """``1 / (1 + exp(-(eta0 + x^T eta)))``."""
    return expit(eta0 + np.dot(x, eta))


def log_prior_xi(xi) -> float:
    """Beta-Bernoulli log prior ``log[G(s+1) G(K-s+1) / G(K+2)]`` with ``s = sum(xi)``."""
    xi = np.asarray(xi)
    K = xi.size
    s = int(np.sum(xi))
    return float(gammaln(s + 1) + gammaln(K - s + 1) - gammaln(K + 2))


def working_prior_logprob(zeta) -> float:
    """Beta-Binomial working prior on the bridging indicators."""
    zeta = np.asarray(zeta)
    if zeta.size < 1:
        raise ValueError("need at least one indicator")
    return log_prior_xi(zeta)


def log_prior_eta_given_xi(eta, xi, X: CovariateMatrix) -> float:
    """Log-density of the unit-information slab ``N(0, 4N (X_xi^T X_xi)^{-1})`` at ``eta_xi``.

    Excluded coefficients are point masses at zero and contribute nothing.
    """
    eta = np.asarray(eta, dtype=float)
    xi = np.asarray(xi).astype(bool)
    if np.any(eta[~xi] != 0):
        raise ValueError("eta has non-zero entries for excluded covariates")
    k = int(xi.sum())
    if k == 0:
        return 0.0
    Xs = X.X[:, xi]
    prec = Xs.T @ Xs / (SLAB_SCALE * X.N)
    Lp = np.linalg.cholesky(prec)
    e = eta[xi]
    q = e @ prec @ e
    return float(-0.5 * k * np.log(2 * np.pi) + np.sum(np.log(np.diag(Lp))) - 0.5 * q)


# ---------------------------------------------------------------------------
# compiled kernels

@nb.njit(cache=True)
def _cholesky(A, L):
    """In-place lower Cholesky; returns False when A is not numerically SPD."""
    n = A.shape[0]
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= SINGULAR_TOL * max(1.0, abs(A[j, j])):
            return False
        L[j, j] = math.sqrt(s)
        for i in range(j + 1, n):
            t = A[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / L[j, j]
    return True


@nb.njit(cache=True)
def _forward(L, b, out):
    n = L.shape[0]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * out[k]
        out[i] = s / L[i, i]


@nb.njit(cache=True)
def _backward(L, b, out):
    # solves L^T out = b
    n = L.shape[0]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]


@nb.njit(cache=True)
def _model_system(X, XtX, kappa, omega, omega_prior, idx, k, Q, h, P):
    """Build posterior precision Q, linear term h and slab precision P for model idx[:k]."""
    N = X.shape[0]
    n = k + 1
    for a in range(n):
        h[a] = 0.0
        for b in range(n):
            Q[a, b] = 0.0
    for i in range(N):
        w = omega[i]
        kap = kappa[i]
        Q[0, 0] += w
        h[0] += kap
        for a in range(k):
            xa = X[i, idx[a]]
            h[a + 1] += kap * xa
            Q[a + 1, 0] += w * xa
            for b in range(a + 1):
                Q[a + 1, b + 1] += w * xa * X[i, idx[b]]
    Q[0, 0] += omega_prior
    inv = 1.0 / (SLAB_SCALE * N)
    for a in range(k):
        for b in range(a + 1):
            p = XtX[idx[a], idx[b]] * inv
            P[a, b] = p
            P[b, a] = p
            Q[a + 1, b + 1] += p
    for a in range(n):
        for b in range(a + 1, n):
            Q[a, b] = Q[b, a]


@nb.njit(cache=True)
def _log_evidence(X, XtX, kappa, omega, omega_prior, xi, Q, h, P, LQ, LP, tmp, idx):
    """Log marginal of the PG-Gaussianized likelihood with (eta0, eta_xi) integrated.

    Returns -inf when the slab precision is numerically singular.  Constant
    terms shared by every model are dropped.
    """
    k = 0
    for j in range(xi.shape[0]):
        if xi[j]:
            idx[k] = j
            k += 1
    _model_system(X, XtX, kappa, omega, omega_prior, idx, k, Q, h, P)
    n = k + 1
    out = 0.0
    if k > 0:
        if not _cholesky(P[:k, :k], LP[:k, :k]):
            return -np.inf, k
        for a in range(k):
            out += math.log(LP[a, a])
    if not _cholesky(Q[:n, :n], LQ[:n, :n]):
        return -np.inf, k
    _forward(LQ[:n, :n], h[:n], tmp[:n])
    quad = 0.0
    for a in range(n):
        out -= math.log(LQ[a, a])
        quad += tmp[a] * tmp[a]
    return out + 0.5 * quad, k


@nb.njit(cache=True)
def _log_prior_xi_count(s, K):
    return math.lgamma(s + 1.0) + math.lgamma(K - s + 1.0) - math.lgamma(K + 2.0)


@nb.njit(cache=True)
def _sweep(X, XtX, zeta, xi, eta, eta0, omega, rng, update_xi, Q, h, P, LQ, LP, tmp, idx, z):
    N, K = X.shape
    # 1) Polya-Gamma auxiliaries
    for i in range(N):
        psi = eta0
        for j in range(K):
            psi += X[i, j] * eta[j]
        omega[i] = pg_draw(1, psi, rng)
    omega[N] = pg_draw(1, eta0, rng)
    omega[N + 1] = pg_draw(1, eta0, rng)
    omega_prior = omega[N] + omega[N + 1]
    kappa = np.empty(N)
    for i in range(N):
        kappa[i] = zeta[i] - 0.5

    # 2) single-flip Metropolized Gibbs moves on xi, random scan
    n_sing = 0
    if update_xi and K > 0:
        s = 0
        for j in range(K):
            s += xi[j]
        cur, _ = _log_evidence(X, XtX, kappa, omega, omega_prior, xi, Q, h, P, LQ, LP, tmp, idx)
        cur += _log_prior_xi_count(s, K)
        order = np.arange(K)
        for j in range(K - 1, 0, -1):
            r = int(rng.random() * (j + 1))
            t = order[j]
            order[j] = order[r]
            order[r] = t
        for t in range(K):
            j = order[t]
            xi[j] = 1 - xi[j]
            s2 = s + (1 if xi[j] else -1)
            prop, _ = _log_evidence(X, XtX, kappa, omega, omega_prior, xi, Q, h, P, LQ, LP, tmp, idx)
            prop += _log_prior_xi_count(s2, K)
            if prop == -np.inf:
                n_sing += 1
            if prop > -np.inf and math.log(rng.random()) < prop - cur:
                cur = prop
                s = s2
            else:
                xi[j] = 1 - xi[j]

    # 3) (eta0, eta_xi) from the Gaussian conditional
    val, k = _log_evidence(X, XtX, kappa, omega, omega_prior, xi, Q, h, P, LQ, LP, tmp, idx)
    if val == -np.inf:
        return eta0, False, n_sing
    n = k + 1
    LQn = LQ[:n, :n]
    _forward(LQn, h[:n], tmp[:n])
    mean = np.empty(n)
    _backward(LQn, tmp[:n], mean)
    for a in range(n):
        z[a] = rng.standard_normal()
    dev = np.empty(n)
    _backward(LQn, z[:n], dev)
    eta0 = mean[0] + dev[0]
    for j in range(K):
        eta[j] = 0.0
    for a in range(k):
        eta[idx[a]] = mean[a + 1] + dev[a + 1]
    return eta0, True, n_sing


@nb.njit(cache=True)
def _chain(X, XtX, zeta, xi, eta, eta0, omega, rng, update_xi, n_burn, n_keep, thin,
           out_xi, out_eta0, out_eta):
    N, K = X.shape
    n = K + 1
    Q = np.zeros((n, n))
    LQ = np.zeros((n, n))
    P = np.zeros((max(K, 1), max(K, 1)))
    LP = np.zeros((max(K, 1), max(K, 1)))
    h = np.zeros(n)
    tmp = np.zeros(n)
    z = np.zeros(n)
    idx = np.zeros(max(K, 1), dtype=np.int64)
    total = n_burn + n_keep * thin
    kept = 0
    n_sing = 0
    for it in range(total):
        eta0, ok, ns = _sweep(X, XtX, zeta, xi, eta, eta0, omega, rng, update_xi,
                              Q, h, P, LQ, LP, tmp, idx, z)
        n_sing += ns
        if not ok:
            return eta0, it, n_sing
        if it >= n_burn and (it - n_burn + 1) % thin == 0:
            for j in range(K):
                out_xi[kept, j] = xi[j]
                out_eta[kept, j] = eta[j]
            out_eta0[kept] = eta0
            kept += 1
    return eta0, -1, n_sing


# ---------------------------------------------------------------------------
# public wrappers

class SingularModelError(RuntimeError):
    """The current model's precision matrix became numerically singular."""


def _xtx(X: CovariateMatrix):
    return np.ascontiguousarray(X.X.T @ X.X)


def init_select_state(K, N, rng=None) -> SelectState:
    """Diffuse start: empty model, zero coefficients."""
    return SelectState(np.zeros(K, dtype=np.int64), 0.0, np.zeros(K), np.full(N + 2, 0.25))


def mwg_chain(state: SelectState, zeta, X: CovariateMatrix, rng, n_burn=0, n_keep=1,
              thin=1, update_xi=True, XtX=None):
    """Run ``n_burn + n_keep * thin`` sweeps and record every ``thin``-th after burn-in.

    Returns ``(final_state, traces)`` with ``traces`` holding ``xi`` (int8),
    ``eta0`` and ``eta`` arrays of leading length ``n_keep``.
    """
    zeta = np.ascontiguousarray(np.asarray(zeta, dtype=float))
    if zeta.shape != (X.N,):
        raise ValueError(f"zeta must have length {X.N}")
    if thin < 1 or n_keep < 0 or n_burn < 0:
        raise ValueError("invalid chain lengths")
    st = state.copy()
    xi = st.xi.astype(np.int64)
    eta = np.ascontiguousarray(st.eta, dtype=float)
    omega = np.ascontiguousarray(st.pg_aux, dtype=float)
    out_xi = np.zeros((n_keep, X.K), dtype=np.int64)
    out_eta0 = np.zeros(n_keep)
    out_eta = np.zeros((n_keep, X.K))
    if XtX is None:
        XtX = _xtx(X)
    eta0, failed_at, n_sing = _chain(X.X, XtX, zeta, xi, eta, float(st.eta0), omega, rng,
                             bool(update_xi), int(n_burn), int(n_keep), int(thin),
                             out_xi, out_eta0, out_eta)
    if n_sing:
        log.warning("%d proposals led to numerically singular models and were rejected", n_sing)
    if failed_at >= 0:
        log.warning("current model became numerically singular at sweep %d", failed_at)
        raise SingularModelError("selection model precision is singular")
    new = SelectState(xi, float(eta0), eta, omega)
    traces = {"xi": out_xi.astype(np.int8), "eta0": out_eta0, "eta": out_eta}
    return new, traces


def mwg_sweep(state: SelectState, zeta, X: CovariateMatrix, rng, update_xi=True) -> SelectState:
    """One Metropolis-within-Gibbs sweep given the bridging indicators."""
    new, _ = mwg_chain(state, zeta, X, rng, n_burn=1, n_keep=0, update_xi=update_xi)
    return new


def log_marginal_given_pg(xi, zeta, X: CovariateMatrix, pg_aux) -> float:
    """Model evidence under the PG-Gaussianized likelihood, up to a model-free constant."""
    K = X.K
    n = K + 1
    Q = np.zeros((n, n))
    LQ = np.zeros((n, n))
    P = np.zeros((max(K, 1), max(K, 1)))
    LP = np.zeros_like(P)
    h = np.zeros(n)
    tmp = np.zeros(n)
    idx = np.zeros(max(K, 1), dtype=np.int64)
    kappa = np.asarray(zeta, dtype=float) - 0.5
    omega = np.asarray(pg_aux, dtype=float)
    val, _ = _log_evidence(X.X, _xtx(X), kappa, omega, omega[X.N] + omega[X.N + 1],
                           np.asarray(xi, dtype=np.int64), Q, h, P, LQ, LP, tmp, idx)
    return float(val)


def sample_zeta_prior(N, rng, size=None, eta0=None):
    """Draw bridging indicators from the intercept-only model (``xi = 0``).

    ``eta0`` is drawn from the standard logistic distribution unless given.
    Returns an ``(N,)`` int array, or ``(size, N)`` with ``size`` given.
    """
    shape = () if size is None else (size,)
    if eta0 is None:
        eta0 = rng.logistic(size=shape)
    p = expit(np.asarray(eta0))
    u = rng.random(shape + (N,))
    return (u < np.asarray(p)[..., None]).astype(np.int64)


class SelectionSecondModule:
    """Engine adapter for the selection module."""

    def __init__(self, X: CovariateMatrix):
        self.X = X
        self._XtX = _xtx(X)

    def init_state(self, rng):
        return init_select_state(self.X.K, self.X.N)

    def sweep(self, state, zeta, rng):
        new, _ = mwg_chain(state, zeta, self.X, rng, n_burn=1, n_keep=0, XtX=self._XtX)
        return new

    def run_chain(self, state, zeta, rng, n_burn, n_keep, thin):
        return mwg_chain(state, zeta, self.X, rng, n_burn=n_burn, n_keep=n_keep, thin=thin,
                         XtX=self._XtX)

    def zeta_prior(self, state):
        from .irt import ConditionalLogistic

        return ConditionalLogistic(state.eta0, state.eta.copy(), self.X.X)

    def trace_values(self, state):
        return {"xi": state.xi.astype(np.int8), "eta0": np.array(state.eta0), "eta": state.eta}
