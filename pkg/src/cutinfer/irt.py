"""First module: two-domain item-response model with bridging indicators.

``P(y_ij = 1) = sigmoid(mu_j + alpha_j * beta_{i, w_j})`` where ``w_j`` marks
final-passage (1) versus procedural (0) votes.  Legislator ``i`` is a bridge
(``zeta_i = 1``) when ``beta_{i,0} == beta_{i,1}``.

Hyperpriors: ``rho_beta, rho_mu ~ N(0, 1)``; ``sigma2_beta, kappa2_mu,
kappa2_alpha ~ IG(2, 1)``; ``alpha_j ~ omega_alpha * delta_0 + (1 - omega_alpha)
N(0, kappa2_alpha)`` with ``omega_alpha ~ U(0, 1)``.

The Gibbs sweep uses Polya-Gamma augmentation, so every conditional other
than the hyperparameters is Gaussian (or a two-point mixture of Gaussians for
the spike-and-slab and bridging choices, resolved by comparing marginals).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats
from scipy.special import expit, gammaln

from .polya_gamma import pg_fill

__all__ = [
    "RollCallData",
    "IrtState",
    "WorkingBetaBinomial",
    "ConditionalLogistic",
    "loglik",
    "log_prior",
    "log_joint",
    "irt_sweep",
    "init_irt_state",
    "RollCallSettings",
    "SimulatedRollCall",
    "simulate_rollcall",
    "align_signs",
    "IrtFirstModule",
    "BLOCKS",
]

log = logging.getLogger(__name__)

IG_SHAPE = 2.0
IG_SCALE = 1.0
THETA_WARN = 30.0
BLOCKS = ("pg", "items", "alpha", "legislators", "zeta", "hyper")


class DataError(ValueError):
    """Malformed roll-call data."""


@dataclass(frozen=True)
class RollCallData:
    """Binary vote matrix with vote-type flags.

    Parameters
    ----------
    Y : (N, J) array
        Entries 0, 1 or NaN (missing).
    w : (J,) array
        1 for final-passage votes, 0 for procedural votes.
    """

    Y: np.ndarray
    w: np.ndarray
    legislator_ids: tuple = ()
    vote_ids: tuple = ()
    observed: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Y = np.array(self.Y, dtype=float)
        w = np.asarray(self.w).astype(np.int64).ravel()
        if Y.ndim != 2:
            raise DataError("Y must be a 2-D matrix")
        N, J = Y.shape
        if w.shape != (J,):
            raise DataError(f"w has length {w.size}, expected {J}")
        if not np.all(np.isin(w, (0, 1))):
            raise DataError("vote-type flags must be 0 or 1")
        if w.min() == w.max():
            raise DataError("both procedural and final-passage votes are required")
        obs = ~np.isnan(Y)
        if not np.all(np.isin(Y[obs], (0.0, 1.0))):
            raise DataError("votes must be 0, 1 or missing")
        if np.any(obs.sum(axis=1) == 0):
            raise DataError("some legislator has no observed vote")
        if np.any(obs.sum(axis=0) == 0):
            raise DataError("some vote has no observed response")
        lids = tuple(self.legislator_ids) or tuple(str(i + 1) for i in range(N))
        vids = tuple(self.vote_ids) or tuple(str(j + 1) for j in range(J))
        if len(lids) != N or len(vids) != J:
            raise DataError("id labels do not match the matrix dimensions")
        Y.setflags(write=False)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "observed", obs)
        object.__setattr__(self, "legislator_ids", lids)
        object.__setattr__(self, "vote_ids", vids)

    @property
    def N(self):
        return self.Y.shape[0]

    @property
    def J(self):
        return self.Y.shape[1]

    @cached_property
    def prepared(self):
        return _Prepared(self)


class _Prepared:
    """Per-dataset constants reused across sweeps."""

    def __init__(self, data: RollCallData):
        self.obs = data.observed
        self.y = np.where(self.obs, data.Y, 0.0)
        self.kappa = np.where(self.obs, self.y - 0.5, 0.0)
        self.D = np.stack([data.w == 0, data.w == 1], axis=1).astype(float)
        self.n_obs = int(self.obs.sum())
        self.ones = np.ones(self.n_obs, dtype=np.int64)


@dataclass
class IrtState:
    """Complete latent state of the first-module chain."""

    mu: np.ndarray
    alpha: np.ndarray
    omega_alpha: float
    kappa2_alpha: float
    kappa2_mu: float
    rho_mu: float
    rho_beta: float
    sigma2_beta: float
    beta0: np.ndarray
    beta1: np.ndarray
    zeta: np.ndarray
    pg_aux: np.ndarray

    def copy(self):
        return IrtState(
            self.mu.copy(), self.alpha.copy(), float(self.omega_alpha), float(self.kappa2_alpha),
            float(self.kappa2_mu), float(self.rho_mu), float(self.rho_beta),
            float(self.sigma2_beta), self.beta0.copy(), self.beta1.copy(), self.zeta.copy(),
            self.pg_aux.copy(),
        )

    def check(self):
        """Raise ``ValueError`` if a structural invariant is violated."""
        b = self.zeta == 1
        if np.any(self.beta0[b] != self.beta1[b]):
            raise ValueError("bridge with unequal ideal points")
        if min(self.kappa2_alpha, self.kappa2_mu, self.sigma2_beta) <= 0:
            raise ValueError("non-positive variance")
        if not 0.0 <= self.omega_alpha <= 1.0:
            raise ValueError("omega_alpha outside [0, 1]")

    def is_finite(self):
        return all(
            np.all(np.isfinite(v))
            for v in (self.mu, self.alpha, self.beta0, self.beta1, self.pg_aux,
                      self.omega_alpha, self.kappa2_alpha, self.kappa2_mu, self.rho_mu,
                      self.rho_beta, self.sigma2_beta)
        )


@dataclass(frozen=True)
class WorkingBetaBinomial:
    """Exchangeable working prior on the bridging indicators."""

    def log_prob(self, zeta):
        zeta = np.asarray(zeta)
        n, s = zeta.size, int(zeta.sum())
        return float(gammaln(s + 1) + gammaln(n - s + 1) - gammaln(n + 2))


@dataclass(frozen=True)
class ConditionalLogistic:
    """``zeta_i ~ Bernoulli(sigmoid(eta0 + x_i^T eta))`` from the second module."""

    eta0: float
    eta: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        eta = np.asarray(self.eta, dtype=float).ravel()
        if X.shape[1] != eta.size:
            raise ValueError(f"eta has length {eta.size}, X has {X.shape[1]} columns")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "eta", eta)

    def logits(self):
        return self.eta0 + self.X @ self.eta

    def log_prob(self, zeta):
        t = self.logits()
        z = np.asarray(zeta)
        return float(np.sum(np.where(z == 1, -np.logaddexp(0, -t), -np.logaddexp(0, t))))


def _theta(state: IrtState, data: RollCallData):
    B = np.where(data.w[None, :] == 1, state.beta1[:, None], state.beta0[:, None])
    return state.mu[None, :] + state.alpha[None, :] * B, B


def loglik(state: IrtState, data: RollCallData) -> float:
    """Bernoulli-logit log-likelihood over observed cells."""
    theta, _ = _theta(state, data)
    obs = data.observed
    y = data.Y[obs]
    t = theta[obs]
    return float(np.sum(y * t - np.logaddexp(0.0, t)))


def _norm_logpdf(x, m, v):
    return -0.5 * np.log(2 * np.pi * v) - 0.5 * (x - m) ** 2 / v


def _ig_logpdf(x):
    return stats.invgamma.logpdf(x, IG_SHAPE, scale=IG_SCALE)


def log_prior(state: IrtState, zprior) -> float:
    """Log prior density of all first-module quantities.

    The spike at ``alpha_j = 0`` is counted as a point mass, so the value is
    a density with respect to the natural mixed dominating measure.
    """
    out = _norm_logpdf(state.rho_beta, 0.0, 1.0) + _norm_logpdf(state.rho_mu, 0.0, 1.0)
    out += _ig_logpdf(state.sigma2_beta) + _ig_logpdf(state.kappa2_mu) + _ig_logpdf(state.kappa2_alpha)
    if not 0.0 < state.omega_alpha < 1.0:
        return -np.inf
    out += np.sum(_norm_logpdf(state.mu, state.rho_mu, state.kappa2_mu))
    zero = state.alpha == 0
    out += zero.sum() * np.log(state.omega_alpha)
    out += (~zero).sum() * np.log1p(-state.omega_alpha)
    out += np.sum(_norm_logpdf(state.alpha[~zero], 0.0, state.kappa2_alpha))
    bridge = state.zeta == 1
    if np.any(state.beta0[bridge] != state.beta1[bridge]):
        return -np.inf
    out += np.sum(_norm_logpdf(state.beta0, state.rho_beta, state.sigma2_beta))
    out += np.sum(_norm_logpdf(state.beta1[~bridge], state.rho_beta, state.sigma2_beta))
    out += zprior.log_prob(state.zeta)
    return float(out)


def log_joint(state: IrtState, data: RollCallData, zprior) -> float:
    return loglik(state, data) + log_prior(state, zprior)


def init_irt_state(data: RollCallData, rng) -> IrtState:
    """Diffuse start: zero locations, random-sign unit discriminations, all bridges."""
    N, J = data.N, data.J
    return IrtState(
        mu=np.zeros(J),
        alpha=rng.choice([-1.0, 1.0], size=J),
        omega_alpha=0.5,
        kappa2_alpha=1.0,
        kappa2_mu=1.0,
        rho_mu=0.0,
        rho_beta=0.0,
        sigma2_beta=1.0,
        beta0=np.zeros(N),
        beta1=np.zeros(N),
        zeta=np.ones(N, dtype=np.int64),
        pg_aux=np.where(data.observed, 0.25, 0.0),
    )


def _log_marg1(h, q, m, v):
    """log of int exp(h b - q b^2 / 2) N(b | m, v) db."""
    P = 1.0 / v + q
    lin = h + m / v
    return -0.5 * np.log(v * P) + 0.5 * lin * lin / P - 0.5 * m * m / v


def _sample_ig(shape, scale, rng):
    return scale / rng.gamma(shape)


def irt_sweep(state: IrtState, data: RollCallData, zprior, rng, likelihood=True, freeze=()) -> IrtState:
    """One Gibbs sweep of the first module.

    Parameters
    ----------
    state : IrtState
        Current state (not modified).
    data : RollCallData
    zprior : WorkingBetaBinomial or ConditionalLogistic
        Prior on the bridging indicators.
    rng : numpy.random.Generator
    likelihood : bool
        If False the votes are ignored and the sweep targets the prior.
    freeze : iterable of str
        Blocks held fixed, any of ``"pg", "items", "alpha", "legislators",
        "zeta", "hyper"``.

    Returns
    -------
    IrtState
    """
    freeze = frozenset(freeze)
    unknown = freeze - set(BLOCKS)
    if unknown:
        raise ValueError(f"unknown blocks {sorted(unknown)}")
    prep = data.prepared
    s = state.copy()
    N, J = data.N, data.J

    # 1) Polya-Gamma auxiliaries
    if likelihood:
        theta, B = _theta(s, data)
        t_obs = np.ascontiguousarray(theta[prep.obs])
        big = np.abs(t_obs) > THETA_WARN
        if np.any(big):
            log.debug("%d linear predictors exceed |theta| > %g", int(big.sum()), THETA_WARN)
        if "pg" not in freeze:
            draws = np.empty(prep.n_obs)
            pg_fill(prep.ones, t_obs, draws, rng)
            s.pg_aux[prep.obs] = draws
        om = s.pg_aux
        kap = prep.kappa
    else:
        om = np.zeros((N, J))
        kap = om
        B = np.where(data.w[None, :] == 1, s.beta1[:, None], s.beta0[:, None])

    # 2) items: (mu_j, alpha_j)
    if "items" not in freeze:
        p_mu = 1.0 / s.kappa2_mu
        Sw = om.sum(axis=0)
        Swb = (om * B).sum(axis=0)
        h1 = kap.sum(axis=0) + p_mu * s.rho_mu
        if "alpha" in freeze:
            P = p_mu + Sw
            lin = h1 - s.alpha * Swb
            s.mu = lin / P + rng.standard_normal(J) / np.sqrt(P)
        else:
            Swbb = (om * B * B).sum(axis=0)
            hb = (kap * B).sum(axis=0)
            p_al = 1.0 / s.kappa2_alpha
            # spike: mu only
            P1 = p_mu + Sw
            m_spike = -0.5 * np.log(P1 / p_mu) + 0.5 * h1 * h1 / P1
            # slab: (mu, alpha) jointly
            a, b, c = P1, Swb, p_al + Swbb
            det = a * c - b * b
            quad = (c * h1 * h1 - 2 * b * h1 * hb + a * hb * hb) / det
            m_slab = 0.5 * np.log(p_mu * p_al / det) + 0.5 * quad
            with np.errstate(divide="ignore"):
                lo = np.log(s.omega_alpha) - np.log1p(-s.omega_alpha) + m_spike - m_slab
            spike = rng.random(J) < expit(lo)
            z = rng.standard_normal((2, J))
            mu_spike = h1 / P1 + z[0] / np.sqrt(P1)
            m1 = (c * h1 - b * hb) / det
            m2 = (a * hb - b * h1) / det
            L11 = np.sqrt(a)
            L21 = b / L11
            L22 = np.sqrt(c - L21 * L21)
            x2 = z[1] / L22
            x1 = (z[0] - L21 * x2) / L11
            s.mu = np.where(spike, mu_spike, m1 + x1)
            s.alpha = np.where(spike, 0.0, m2 + x2)

    # 3) legislators: zeta_i with beta integrated, then beta
    if "legislators" not in freeze:
        r = kap - om * s.mu[None, :]
        h = (r * s.alpha[None, :]) @ prep.D
        q = (om * (s.alpha * s.alpha)[None, :]) @ prep.D
        rho, v = s.rho_beta, s.sigma2_beta
        if "zeta" not in freeze:
            lo = (_log_marg1(h[:, 0] + h[:, 1], q[:, 0] + q[:, 1], rho, v)
                  - _log_marg1(h[:, 0], q[:, 0], rho, v) - _log_marg1(h[:, 1], q[:, 1], rho, v))
            u = rng.random(N)
            if isinstance(zprior, ConditionalLogistic):
                if zprior.X.shape[0] != N:
                    raise ValueError("covariate rows do not match legislators")
                s.zeta = (u < expit(lo + zprior.logits())).astype(np.int64)
            else:
                zeta = s.zeta.copy()
                tot = int(zeta.sum())
                for i in range(N):
                    rest = tot - zeta[i]
                    prior_lo = np.log(rest + 1.0) - np.log(N - rest)
                    new = 1 if u[i] < expit(lo[i] + prior_lo) else 0
                    tot = rest + new
                    zeta[i] = new
                s.zeta = zeta
        bridge = s.zeta == 1
        z = rng.standard_normal((2, N))
        hb_ = np.where(bridge, h[:, 0] + h[:, 1], h[:, 0])
        qb_ = np.where(bridge, q[:, 0] + q[:, 1], q[:, 0])
        P0 = 1.0 / v + qb_
        b0 = (hb_ + rho / v) / P0 + z[0] / np.sqrt(P0)
        P1 = 1.0 / v + q[:, 1]
        b1 = (h[:, 1] + rho / v) / P1 + z[1] / np.sqrt(P1)
        s.beta0 = b0
        s.beta1 = np.where(bridge, b0, b1)

    # 4) hyperparameters
    if "hyper" not in freeze:
        prec = 1.0 + J / s.kappa2_mu
        s.rho_mu = (s.mu.sum() / s.kappa2_mu) / prec + rng.standard_normal() / np.sqrt(prec)
        dev = s.mu - s.rho_mu
        s.kappa2_mu = _sample_ig(IG_SHAPE + 0.5 * J, IG_SCALE + 0.5 * dev @ dev, rng)
        bridge = s.zeta == 1
        betas = np.concatenate([s.beta0, s.beta1[~bridge]])
        n_b = betas.size
        prec = 1.0 + n_b / s.sigma2_beta
        s.rho_beta = (betas.sum() / s.sigma2_beta) / prec + rng.standard_normal() / np.sqrt(prec)
        dev = betas - s.rho_beta
        s.sigma2_beta = _sample_ig(IG_SHAPE + 0.5 * n_b, IG_SCALE + 0.5 * dev @ dev, rng)
        nz = s.alpha[s.alpha != 0]
        s.kappa2_alpha = _sample_ig(IG_SHAPE + 0.5 * nz.size, IG_SCALE + 0.5 * nz @ nz, rng)
        s.omega_alpha = float(rng.beta(1.0 + J - nz.size, 1.0 + nz.size))
    return s


def sample_irt_prior(data: RollCallData, zprior, rng) -> IrtState:
    """Draw a complete state from the prior (used by the joint-distribution test)."""
    N, J = data.N, data.J
    rho_mu = rng.standard_normal()
    k2mu = _sample_ig(IG_SHAPE, IG_SCALE, rng)
    k2a = _sample_ig(IG_SHAPE, IG_SCALE, rng)
    om = rng.random()
    mu = rho_mu + np.sqrt(k2mu) * rng.standard_normal(J)
    alpha = np.where(rng.random(J) < om, 0.0, np.sqrt(k2a) * rng.standard_normal(J))
    rho_b = rng.standard_normal()
    s2b = _sample_ig(IG_SHAPE, IG_SCALE, rng)
    if isinstance(zprior, ConditionalLogistic):
        zeta = (rng.random(N) < expit(zprior.logits())).astype(np.int64)
    else:
        zeta = (rng.random(N) < rng.random()).astype(np.int64)
    b0 = rho_b + np.sqrt(s2b) * rng.standard_normal(N)
    b1 = np.where(zeta == 1, b0, rho_b + np.sqrt(s2b) * rng.standard_normal(N))
    return IrtState(mu, alpha, om, k2a, k2mu, rho_mu, rho_b, s2b, b0, b1, zeta,
                    np.where(data.observed, 0.25, 0.0))


def sample_votes(state: IrtState, data: RollCallData, rng):
    """Redraw the observed votes from the likelihood, keeping the missingness pattern."""
    theta, _ = _theta(state, data)
    Y = (rng.random(theta.shape) < expit(theta)).astype(float)
    Y[~data.observed] = np.nan
    return Y


@dataclass(frozen=True)
class RollCallSettings:
    """Settings for synthetic roll-call data.

    Bridging indicators follow the logistic second module with coefficients
    ``eta0`` and ``eta`` on standard-normal covariates, unless
    ``bridge_fraction`` fixes the number of bridges directly.
    """

    n_legislators: int = 50
    n_votes: int = 200
    final_fraction: float = 0.5
    bridge_fraction: float | None = None
    eta0: float = 0.0
    eta: tuple = ()
    alpha_sd: float = 2.0
    alpha_zero_fraction: float = 0.0
    mu_sd: float = 1.0
    rho_beta: float = 0.0
    sigma2_beta: float = 1.0
    missing_fraction: float = 0.0
    draw_hyper: bool = False

    def __post_init__(self):
        if self.n_legislators < 1 or self.n_votes < 2:
            raise ValueError("need at least one legislator and two votes")
        n_final = int(round(self.final_fraction * self.n_votes))
        if not 0 < n_final < self.n_votes:
            raise ValueError("final_fraction leaves one vote domain empty")
        if self.bridge_fraction is not None and not 0.0 <= self.bridge_fraction <= 1.0:
            raise ValueError("bridge_fraction must lie in [0, 1]")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise ValueError("missing_fraction must lie in [0, 1)")
        if not 0.0 <= self.alpha_zero_fraction < 1.0:
            raise ValueError("alpha_zero_fraction must lie in [0, 1)")


@dataclass
class SimulatedRollCall:
    data: RollCallData
    truth: IrtState
    X: np.ndarray


def simulate_rollcall(settings: RollCallSettings, rng) -> SimulatedRollCall:
    """Draw covariates, bridging indicators, ideal points and votes."""
    st = settings
    N, J = st.n_legislators, st.n_votes
    K = len(st.eta)
    X = rng.standard_normal((N, K))
    if K:
        X = (X - X.mean(axis=0)) / X.std(axis=0)
    n_final = int(round(st.final_fraction * J))
    w = np.zeros(J, dtype=np.int64)
    w[rng.permutation(J)[:n_final]] = 1
    if st.bridge_fraction is not None:
        zeta = np.zeros(N, dtype=np.int64)
        zeta[rng.permutation(N)[: int(round(st.bridge_fraction * N))]] = 1
    else:
        p = expit(st.eta0 + X @ np.asarray(st.eta, dtype=float))
        zeta = (rng.random(N) < p).astype(np.int64)
    if st.draw_hyper:
        rho_beta = rng.standard_normal()
        s2b = _sample_ig(IG_SHAPE, IG_SCALE, rng)
        rho_mu = rng.standard_normal()
        k2mu = _sample_ig(IG_SHAPE, IG_SCALE, rng)
        k2a = _sample_ig(IG_SHAPE, IG_SCALE, rng)
        om = rng.random()
    else:
        rho_beta, s2b = st.rho_beta, st.sigma2_beta
        rho_mu, k2mu = 0.0, st.mu_sd ** 2
        k2a, om = st.alpha_sd ** 2, st.alpha_zero_fraction
    mu = rho_mu + np.sqrt(k2mu) * rng.standard_normal(J)
    alpha = np.where(rng.random(J) < om, 0.0, np.sqrt(k2a) * rng.standard_normal(J))
    b0 = rho_beta + np.sqrt(s2b) * rng.standard_normal(N)
    b1 = np.where(zeta == 1, b0, rho_beta + np.sqrt(s2b) * rng.standard_normal(N))
    obs = np.ones((N, J), dtype=bool)
    if st.missing_fraction > 0:
        obs = rng.random((N, J)) >= st.missing_fraction
        # keep every row and column non-empty
        obs[np.arange(N), rng.integers(0, J, N)] = True
        obs[rng.integers(0, N, J), np.arange(J)] = True
    truth = IrtState(mu, alpha, float(om), float(k2a), float(k2mu), float(rho_mu),
                     float(rho_beta), float(s2b), b0, b1, zeta, np.zeros((N, J)))
    theta = mu[None, :] + alpha[None, :] * np.where(w[None, :] == 1, b1[:, None], b0[:, None])
    Y = (rng.random((N, J)) < expit(theta)).astype(float)
    Y[~obs] = np.nan
    return SimulatedRollCall(RollCallData(Y, w), truth, X)


def align_signs(beta0, beta1=None, alpha=None, rho_beta=None, anchor=0, n_pass=3):
    """Resolve the reflection invariance of the ideal points.

    Each draw (leading axes of ``beta0``, last axis legislators) is flipped
    when its ``beta0`` is negatively correlated with a reference direction;
    the reference starts at the first draw and is refined as the mean of the
    aligned draws.  Finally every draw is flipped so that the anchor
    legislator's posterior mean is non-negative.  The same signs are applied
    to ``beta1``, ``alpha`` and ``rho_beta`` when given.

    Returns
    -------
    signs : array of +-1 with the leading shape of ``beta0``
    aligned : dict of the flipped arrays
    """
    b0 = np.asarray(beta0, dtype=float)
    lead = b0.shape[:-1]
    flat = b0.reshape(-1, b0.shape[-1])
    ref = flat[0] - flat[0].mean()
    signs = np.ones(flat.shape[0])
    for _ in range(n_pass):
        c = (flat - flat.mean(axis=1, keepdims=True)) @ ref
        signs = np.where(c < 0, -1.0, 1.0)
        ref = (signs[:, None] * flat).mean(axis=0)
        ref = ref - ref.mean()
    if np.mean(signs * flat[:, anchor]) < 0:
        signs = -signs
    signs = signs.reshape(lead)
    out = {"beta0": b0 * signs[..., None]}
    for name, arr in (("beta1", beta1), ("alpha", alpha)):
        if arr is not None:
            out[name] = np.asarray(arr, dtype=float) * signs[..., None]
    if rho_beta is not None:
        out["rho_beta"] = np.asarray(rho_beta, dtype=float) * signs
    return signs, out


class IrtFirstModule:
    """Engine adapter for the roll-call model.

    ``tied_sweeps`` initial sweeps keep every legislator a bridge.  Without
    this the two vote domains can settle on opposite reflections early on,
    a self-reinforcing mode in which almost no one looks like a bridge.
    """

    def __init__(self, data: RollCallData, likelihood=True, tied_sweeps=50):
        self.data = data
        self.likelihood = likelihood
        self.tied_sweeps = int(tied_sweeps)
        self._working = WorkingBetaBinomial()

    def init_state(self, rng):
        s = init_irt_state(self.data, rng)
        for _ in range(self.tied_sweeps):
            s = irt_sweep(s, self.data, self._working, rng, likelihood=self.likelihood,
                          freeze=("zeta",))
        return s

    def sweep_working(self, state, rng):
        return irt_sweep(state, self.data, self._working, rng, likelihood=self.likelihood)

    def sweep_conditional(self, state, zeta_prior, rng):
        return irt_sweep(state, self.data, zeta_prior, rng, likelihood=self.likelihood)

    def zeta(self, state):
        return state.zeta

    def point_estimate(self, working_samples, cfg):
        from .engine import point_estimate_zeta

        return point_estimate_zeta(working_samples.traces["zeta"], cfg.a1, cfg.a2)

    def is_finite(self, state):
        return state.is_finite()

    def trace_values(self, state):
        return {
            "zeta": state.zeta.astype(np.int8),
            "beta0": state.beta0,
            "beta1": state.beta1,
            "alpha": state.alpha,
            "mu": state.mu,
            "hyper": np.array([state.rho_mu, state.kappa2_mu, state.rho_beta, state.sigma2_beta,
                               state.kappa2_alpha, state.omega_alpha]),
        }


HYPER_NAMES = ("rho_mu", "kappa2_mu", "rho_beta", "sigma2_beta", "kappa2_alpha", "omega_alpha")
