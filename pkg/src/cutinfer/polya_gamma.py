"""Polya-Gamma random variables.

``PG(1, c)`` draws use the exact alternating-series accept/reject sampler of
Polson, Scott and Windle (2013); integer ``b > 1`` is handled by summing ``b``
independent ``PG(1, c)`` draws.  The kernels are compiled with numba and take
a :class:`numpy.random.Generator` so that draws are reproducible from a seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

__all__ = ["PGParams", "sample_pg", "mean_pg"]

_TRUNC = 0.64
_TRUNC_RECIP = 1.0 / _TRUNC
_PI2 = math.pi * math.pi
_LOG_2PI = math.log(2.0 * math.pi)
_SMALL_C = 1e-8


@dataclass(frozen=True)
class PGParams:
    """Shape ``b`` (positive integer) and tilt ``c`` (finite real)."""

    b: int
    c: float

    def __post_init__(self):
        if int(self.b) != self.b or self.b < 1:
            raise ValueError(f"b must be a positive integer, got {self.b}")
        if not math.isfinite(self.c):
            raise ValueError("c must be finite")


@nb.njit(cache=True)
def _log_norm_cdf(x):
    if x > -30.0:
        return math.log(0.5 * math.erfc(-x / math.sqrt(2.0)))
    # asymptotic expansion of the Mills ratio
    x2 = x * x
    return -0.5 * x2 - math.log(-x) - 0.5 * _LOG_2PI + math.log1p(-1.0 / x2 + 3.0 / (x2 * x2))


@nb.njit(cache=True)
def _series_coef(n, x):
    # n-th term of the alternating series for J*(1, 0)
    k = (n + 0.5) * math.pi
    if x > _TRUNC:
        return k * math.exp(-0.5 * k * k * x)
    if x > 0.0:
        e = -1.5 * (math.log(0.5 * math.pi) + math.log(x)) + math.log(k) - 2.0 * (n + 0.5) * (n + 0.5) / x
        return math.exp(e)
    return 0.0


@nb.njit(cache=True)
def _prob_exponential_proposal(z):
    # mixture weight p / (p + q) of the truncated exponential piece, in log space
    fz = 0.125 * _PI2 + 0.5 * z * z
    rt = math.sqrt(1.0 / _TRUNC)
    b = rt * (_TRUNC * z - 1.0)
    a = -rt * (_TRUNC * z + 1.0)
    x0 = math.log(fz) + fz * _TRUNC
    xb = x0 - z + _log_norm_cdf(b)
    xa = x0 + z + _log_norm_cdf(a)
    m = max(xb, xa)
    log_q_over_p = math.log(4.0 / math.pi) + m + math.log(math.exp(xb - m) + math.exp(xa - m))
    if log_q_over_p > 0:
        e = math.exp(-log_q_over_p)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(log_q_over_p))


@nb.njit(cache=True)
def _truncated_inverse_gaussian(z, rng):
    # inverse-Gaussian(1/z, 1) restricted to (0, TRUNC)
    if z < _TRUNC_RECIP:
        alpha = 0.0
        x = 0.0
        while rng.random() > alpha:
            e1 = rng.standard_exponential()
            e2 = rng.standard_exponential()
            while e1 * e1 > 2.0 * e2 / _TRUNC:
                e1 = rng.standard_exponential()
                e2 = rng.standard_exponential()
            x = 1.0 + e1 * _TRUNC
            x = _TRUNC / (x * x)
            alpha = math.exp(-0.5 * z * z * x)
        return x
    mu = 1.0 / z
    x = _TRUNC + 1.0
    while x > _TRUNC:
        y = rng.standard_normal()
        y *= y
        half_mu = 0.5 * mu
        mu_y = mu * y
        x = mu + half_mu * mu_y - half_mu * math.sqrt(4.0 * mu_y + mu_y * mu_y)
        if rng.random() > mu / (mu + x):
            x = mu * mu / x
    return x


@nb.njit(cache=True)
def _pg1(c, rng):
    z = 0.5 * abs(c)
    fz = 0.125 * _PI2 + 0.5 * z * z
    p_exp = _prob_exponential_proposal(z)
    while True:
        if rng.random() < p_exp:
            x = _TRUNC + rng.standard_exponential() / fz
        else:
            x = _truncated_inverse_gaussian(z, rng)
        s = _series_coef(0, x)
        y = rng.random() * s
        n = 0
        while True:
            n += 1
            if n % 2 == 1:
                s -= _series_coef(n, x)
                if y <= s:
                    return 0.25 * x
            else:
                s += _series_coef(n, x)
                if y > s:
                    break


@nb.njit(cache=True)
def pg_draw(b, c, rng):
    """One draw from ``PG(b, c)`` for integer ``b >= 1`` (jit-callable)."""
    out = 0.0
    for _ in range(b):
        out += _pg1(c, rng)
    return out


@nb.njit(cache=True)
def pg_fill(b, c, out, rng):
    """Fill ``out[i] ~ PG(b[i], c[i])`` for flat arrays (jit-callable)."""
    for i in range(c.shape[0]):
        out[i] = pg_draw(b[i], c[i], rng)


def sample_pg(b, c, rng: np.random.Generator, size=None):
    """Draw Polya-Gamma variables ``PG(b, c)``.

    Parameters
    ----------
    b : int or array of int
        Shape parameter(s); positive integers only.
    c : float or array
        Tilt parameter(s).
    rng : numpy.random.Generator
        Source of randomness.
    size : int or tuple, optional
        Output shape when ``b`` and ``c`` are scalars.

    Returns
    -------
    float or ndarray
        Strictly positive draws broadcast to the shape of ``b``, ``c`` and ``size``.
    """
    b_arr = np.asarray(b)
    if not np.all(b_arr >= 1) or not np.all(np.floor(b_arr) == b_arr):
        raise ValueError("b must be a positive integer")
    c_arr = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(c_arr)):
        raise ValueError("c must be finite")
    extra = () if size is None else tuple(np.atleast_1d(size).tolist())
    shape = np.broadcast_shapes(b_arr.shape, c_arr.shape, extra)
    bb = np.ascontiguousarray(np.broadcast_to(b_arr, shape).astype(np.int64).ravel())
    cc = np.ascontiguousarray(np.broadcast_to(c_arr, shape).ravel())
    out = np.empty(cc.shape[0])
    pg_fill(bb, cc, out, rng)
    if shape == ():
        return float(out[0])
    return out.reshape(shape)


def mean_pg(b, c):
    """Mean ``b / (2c) tanh(c / 2)`` of ``PG(b, c)``, equal to ``b / 4`` at ``c = 0``."""
    b = np.asarray(b, dtype=float)
    c = np.abs(np.asarray(c, dtype=float))
    small = c < _SMALL_C
    safe = np.where(small, 1.0, c)
    # tanh(c/2)/(2c) = 1/4 - c^2/48 + ...
    out = np.where(small, b * (0.25 - c * c / 48.0), b * np.tanh(0.5 * safe) / (2.0 * safe))
    return float(out) if out.ndim == 0 else out
