"""Convergence and posterior summaries computed from stored traces."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "rhat",
    "pip",
    "median_model",
    "bridging_frequency",
    "cumulative_model_prob",
    "odds_ratio_summary",
    "OddsRatio",
    "BridgingSummary",
    "DiagnosticsReport",
    "build_report",
]


def rhat(chains) -> float:
    """Potential scale reduction factor of equal-length scalar chains.

    ``sqrt((n - 1)/n + B/(n W))`` with ``B`` the between-chain variance
    (times ``n``) and ``W`` the mean within-chain variance.  Returns 1.0 when
    all chains are the same constant and ``inf`` when every chain is
    constant but their values differ.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2:
        raise ValueError("expected a (chains, draws) array")
    m, n = x.shape
    if m < 2 or n < 4:
        raise ValueError("need at least 2 chains of length 4")
    means = x.mean(axis=1)
    W = x.var(axis=1, ddof=1).mean()
    B = n * means.var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else math.inf
    return float(math.sqrt((n - 1) / n + B / (n * W)))


def pip(xi_traces):
    """Posterior inclusion probabilities: the mean of each ``xi_k`` over all draws."""
    xi = np.asarray(xi_traces, dtype=float)
    if xi.size == 0 and xi.shape[-1] != 0:
        raise ValueError("empty traces")
    return xi.reshape(-1, xi.shape[-1]).mean(axis=0) if xi.shape[-1] else np.zeros(0)


def median_model(pips):
    """Covariates whose inclusion probability is at least one half."""
    return (np.asarray(pips) >= 0.5).astype(np.int64)


@dataclass
class BridgingSummary:
    trace: np.ndarray
    mean: float
    lower: float
    upper: float


def bridging_frequency(zeta_traces, level=0.95) -> BridgingSummary:
    """Fraction of bridges in each draw, with its mean and equal-tailed interval."""
    z = np.asarray(zeta_traces, dtype=float)
    if z.size == 0:
        raise ValueError("empty traces")
    bf = z.reshape(-1, z.shape[-1]).mean(axis=1)
    a = (1 - level) / 2
    lo, hi = np.quantile(bf, [a, 1 - a])
    return BridgingSummary(bf, float(bf.mean()), float(lo), float(hi))


def _model_counts(xi_traces):
    xi = np.asarray(xi_traces)
    n = int(np.prod(xi.shape[:-1]))
    flat = xi.reshape(n, xi.shape[-1]).astype(np.int8)
    if flat.shape[0] == 0:
        raise ValueError("empty traces")
    return Counter(row.tobytes() for row in flat), flat.shape[0]


def cumulative_model_prob(xi_traces, top=100):
    """Cumulative empirical probability of the ``top`` most visited models.

    Ties in frequency are broken by the model's bit pattern so the result is
    deterministic.  If fewer than ``top`` models were visited the curve is
    padded with its final value.
    """
    if top < 1:
        raise ValueError("top must be at least 1")
    counts, n = _model_counts(xi_traces)
    freq = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    vals = np.array([c for _, c in freq[:top]], dtype=float) / n
    curve = np.cumsum(vals)
    if curve.size < top:
        curve = np.concatenate([curve, np.full(top - curve.size, curve[-1])])
    return np.minimum(curve, 1.0)


def top_models(xi_traces, top=10):
    """The ``top`` most frequent models as ``(bits, frequency)`` pairs."""
    counts, n = _model_counts(xi_traces)
    freq = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top]
    return [(np.frombuffer(b, dtype=np.int8).astype(int), c / n) for b, c in freq]


@dataclass
class OddsRatio:
    pip: float
    mean: float = math.nan
    lower: float = math.nan
    upper: float = math.nan
    never_included: bool = False


def odds_ratio_summary(eta_traces, xi_traces, scale=None, level=0.95):
    """Odds ratios ``exp(scale_k * eta_k)`` over the draws that include covariate ``k``.

    Returns one :class:`OddsRatio` per covariate; covariates that are never
    included are flagged and carry no summary.
    """
    eta = np.asarray(eta_traces, dtype=float)
    xi = np.asarray(xi_traces)
    K = eta.shape[-1]
    eta = eta.reshape(-1, K)
    xi = xi.reshape(-1, K).astype(bool)
    if eta.shape != xi.shape:
        raise ValueError("eta and xi traces are not aligned")
    scale = np.ones(K) if scale is None else np.broadcast_to(np.asarray(scale, dtype=float), (K,))
    a = (1 - level) / 2
    out = []
    for k in range(K):
        p = float(xi[:, k].mean()) if xi.shape[0] else math.nan
        sel = eta[xi[:, k], k]
        if sel.size == 0:
            out.append(OddsRatio(p, never_included=True))
            continue
        r = np.exp(scale[k] * sel)
        lo, hi = np.quantile(r, [a, 1 - a])
        out.append(OddsRatio(p, float(r.mean()), float(lo), float(hi)))
    return out


@dataclass
class DiagnosticsReport:
    """Summary of one run."""

    rhat: dict
    pip: np.ndarray
    median_model: np.ndarray
    bf_summary: BridgingSummary
    cumprob: np.ndarray
    kl_bound: object = None
    odds_ratios: list = field(default_factory=list)


def _rhat_all(traces, names):
    out = {}
    for name in names:
        if name not in traces:
            continue
        a = np.asarray(traces[name], dtype=float)
        if a.shape[0] < 2 or a.shape[1] < 4:
            continue
        flat = a.reshape(a.shape[0], a.shape[1], -1)
        for j in range(flat.shape[2]):
            key = name if flat.shape[2] == 1 else f"{name}[{j}]"
            out[key] = rhat(flat[:, :, j])
    return out


def build_report(samples, top=100, scale=None):
    """Assemble a :class:`DiagnosticsReport` from a :class:`PosteriorSamples`."""
    from .engine import kl_bound_estimate

    tr = samples.traces
    xi = tr["xi"]
    z = tr["zeta"]
    bf = bridging_frequency(z)
    rh = _rhat_all(tr, ("eta0", "eta", "xi"))
    if z.shape[0] >= 2 and z.shape[1] >= 4:
        bf_chains = np.asarray(z, dtype=float).reshape(z.shape[0], z.shape[1], -1).mean(axis=2)
        rh["bf"] = rhat(bf_chains)
    p = pip(xi)
    kl = kl_bound_estimate(samples) if samples.regime == "full" else None
    ors = odds_ratio_summary(tr["eta"], xi, scale=scale) if xi.shape[-1] else []
    return DiagnosticsReport(rh, p, median_model(p), bf, cumulative_model_prob(xi, top), kl, ors)
