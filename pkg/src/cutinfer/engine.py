"""Full, two-step and cut inference over pluggable first/second modules.

A first module provides

* ``init_state(rng)``
* ``sweep_working(state, rng)``: one transition targeting the working posterior
* ``sweep_conditional(state, zeta_prior, rng)``: one transition given the
  prior on ``zeta`` implied by the current second-module state
* ``zeta(state)``, ``point_estimate(working_samples, cfg)``, ``trace_values(state)``

and a second module provides ``init_state(rng)``, ``sweep(state, zeta, rng)``,
``zeta_prior(state)``, ``trace_values(state)`` and optionally a fast
``run_chain(state, zeta, rng, n_burn, n_keep, thin)``.

Every run is a deterministic function of the modules and ``cfg.seed``.  The
random stream of chain ``c`` (and cut replicate ``b``) is derived from
``SeedSequence(seed, spawn_key=(regime, c[, b]))``, so parallel execution
order never changes the output.  Two-step and cut runs share the working
draws of ``run_working_first_level``.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "ChainConfig",
    "PosteriorSamples",
    "NumericalFailure",
    "KLBound",
    "run_full",
    "run_working_first_level",
    "point_estimate_zeta",
    "run_two_step",
    "run_cut",
    "kl_bound_estimate",
    "threshold_sensitivity",
]

log = logging.getLogger(__name__)

REGIME_CODES = {"working": 0, "full": 1, "twostep": 2, "cut": 3}


class NumericalFailure(RuntimeError):
    """A chain produced a non-finite state; ``state`` holds the offending value."""

    def __init__(self, msg, state=None, regime=None, chain=None, iteration=None):
        super().__init__(msg)
        self.state = state
        self.regime = regime
        self.chain = chain
        self.iteration = iteration


@dataclass(frozen=True)
class ChainConfig:
    """MCMC lengths, loss weights and seed.

    ``samples`` draws are stored per chain after ``burn_in`` iterations,
    keeping every ``thin``-th.  ``inner_steps`` is the length of each cut
    inner chain.  The zero-one loss weights ``a1``, ``a2`` give the
    threshold ``a2 / (a1 + a2)`` for the point estimate of ``zeta``.
    """

    chains: int = 4
    burn_in: int = 1000
    samples: int = 1000
    thin: int = 1
    inner_steps: int = 200
    a1: float = 1.0
    a2: float = 1.0
    seed: int = 0
    n_jobs: int = 1
    check_every: int = 100

    def __post_init__(self):
        for name in ("chains", "samples", "thin", "inner_steps", "n_jobs", "check_every"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")
        if not (self.a1 > 0 and self.a2 > 0):
            raise ValueError("loss weights must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def threshold(self):
        return self.a2 / (self.a1 + self.a2)

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


@dataclass
class PosteriorSamples:
    """Stored draws: ``traces[name]`` has shape ``(chains, samples, ...)``."""

    regime: str
    traces: dict
    meta: dict = field(default_factory=dict)

    @property
    def n_chains(self):
        return next(iter(self.traces.values())).shape[0]

    @property
    def n_draws(self):
        return next(iter(self.traces.values())).shape[1]

    def pooled(self, name):
        """Draws of ``name`` with the chain axis merged into the draw axis."""
        a = self.traces[name]
        return a.reshape((-1,) + a.shape[2:])


def _rng(seed, regime, *keys):
    ss = np.random.SeedSequence(int(seed), spawn_key=(REGIME_CODES[regime],) + tuple(int(k) for k in keys))
    return np.random.default_rng(ss)


def _finite(x):
    if hasattr(x, "is_finite"):
        return bool(x.is_finite())
    if isinstance(x, np.ndarray) or np.isscalar(x):
        return bool(np.all(np.isfinite(x)))
    if dataclasses.is_dataclass(x):
        return all(_finite(getattr(x, f.name)) for f in dataclasses.fields(x))
    return True


def _check(state, regime, chain, it, module=None):
    ok = module.is_finite(state) if hasattr(module, "is_finite") else _finite(state)
    if not ok:
        log.error("non-finite state in %s chain %d at iteration %d", regime, chain, it)
        raise NumericalFailure(
            f"non-finite state in {regime} chain {chain} at iteration {it}",
            state=state, regime=regime, chain=chain, iteration=it,
        )


class _Recorder:
    def __init__(self):
        self.rows = {}

    def add(self, values):
        for k, v in values.items():
            self.rows.setdefault(k, []).append(np.array(v, copy=True))

    def arrays(self):
        return {k: np.stack(v) for k, v in self.rows.items()}


def _merge_chains(per_chain):
    names = per_chain[0].keys()
    return {k: np.stack([c[k] for c in per_chain]) for k in names}


def _meta(cfg, regime, t0, **extra):
    m = {
        "regime": regime,
        "seed": int(cfg.seed),
        "chains": cfg.chains,
        "burn_in": cfg.burn_in,
        "samples": cfg.samples,
        "thin": cfg.thin,
        "wall_time": time.perf_counter() - t0,
    }
    m.update(extra)
    return m


def _kept(it, cfg):
    return it >= cfg.burn_in and (it - cfg.burn_in + 1) % cfg.thin == 0


def run_full(first, second, cfg: ChainConfig) -> PosteriorSamples:
    """Alternate the conditional first-module sweep and the second-module sweep."""
    t0 = time.perf_counter()
    total = cfg.burn_in + cfg.samples * cfg.thin
    out = []
    for c in range(cfg.chains):
        rng = _rng(cfg.seed, "full", c)
        s1 = first.init_state(rng)
        s2 = second.init_state(rng)
        rec = _Recorder()
        for it in range(total):
            s1 = first.sweep_conditional(s1, second.zeta_prior(s2), rng)
            s2 = second.sweep(s2, first.zeta(s1), rng)
            if (it + 1) % cfg.check_every == 0 or it == total - 1:
                _check(s1, "full", c, it, first)
                _check(s2, "full", c, it, second)
            if _kept(it, cfg):
                rec.add({**first.trace_values(s1), **second.trace_values(s2)})
        out.append(rec.arrays())
        log.info("full: chain %d done", c)
    return PosteriorSamples("full", _merge_chains(out), _meta(cfg, "full", t0))


def run_working_first_level(first, cfg: ChainConfig) -> PosteriorSamples:
    """Sample the first module under its working prior only."""
    t0 = time.perf_counter()
    total = cfg.burn_in + cfg.samples * cfg.thin
    out = []
    for c in range(cfg.chains):
        rng = _rng(cfg.seed, "working", c)
        s1 = first.init_state(rng)
        rec = _Recorder()
        for it in range(total):
            s1 = first.sweep_working(s1, rng)
            if (it + 1) % cfg.check_every == 0 or it == total - 1:
                _check(s1, "working", c, it, first)
            if _kept(it, cfg):
                rec.add(first.trace_values(s1))
        out.append(rec.arrays())
        log.info("working: chain %d done", c)
    return PosteriorSamples("working", _merge_chains(out), _meta(cfg, "working", t0))


def point_estimate_zeta(traces, a1, a2):
    """Zero-one-loss point estimate: ``zeta_i = 1`` iff ``P(zeta_i = 1 | Y) > a2 / (a1 + a2)``.

    ``traces`` is any array whose last axis indexes legislators.
    """
    if a1 + a2 == 0:
        raise ValueError("a1 + a2 must be non-zero")
    z = np.asarray(traces, dtype=float)
    if z.size == 0:
        raise ValueError("empty traces")
    p = z.reshape(-1, z.shape[-1]).mean(axis=0)
    return (p > a2 / (a1 + a2)).astype(np.int64)


def _second_chain(second, state, zeta, rng, n_burn, n_keep, thin):
    """Run the second module at fixed ``zeta``; returns (final state, list of trace dicts)."""
    if hasattr(second, "run_chain"):
        state, tr = second.run_chain(state, zeta, rng, n_burn, n_keep, thin)
        return state, [{k: v[i] for k, v in tr.items()} for i in range(n_keep)]
    rows = []
    total = n_burn + n_keep * thin
    for it in range(total):
        state = second.sweep(state, zeta, rng)
        if it >= n_burn and (it - n_burn + 1) % thin == 0:
            rows.append(second.trace_values(state))
    return state, rows


def run_two_step(first, second, cfg: ChainConfig, working: PosteriorSamples | None = None):
    """Plug the point estimate of ``zeta`` into the second module."""
    t0 = time.perf_counter()
    if working is None:
        working = run_working_first_level(first, cfg)
    zhat = first.point_estimate(working, cfg)
    out = []
    for c in range(cfg.chains):
        rng = _rng(cfg.seed, "twostep", c)
        s2 = second.init_state(rng)
        s2, rows = _second_chain(second, s2, zhat, rng, cfg.burn_in, cfg.samples, cfg.thin)
        _check(s2, "twostep", c, cfg.burn_in + cfg.samples * cfg.thin - 1, second)
        rec = _Recorder()
        for r in rows:
            rec.add({"zeta": zhat, **r})
        out.append(rec.arrays())
    meta = _meta(cfg, "twostep", t0, threshold=cfg.threshold)
    return PosteriorSamples("twostep", _merge_chains(out), meta)


def _cut_block(second, zetas, seed, chain, b_start, S):
    rows = []
    for k, z in enumerate(zetas):
        b = b_start + k
        rng = _rng(seed, "cut", chain, b)
        s2 = second.init_state(rng)
        s2, kept = _second_chain(second, s2, z, rng, S - 1, 1, 1)
        _check(s2, "cut", chain, b, second)
        rows.append(kept[-1])
    return rows


def run_cut(first, second, cfg: ChainConfig, working: PosteriorSamples | None = None):
    """For every working draw ``zeta_b`` run an independent second-module chain of length ``S``.

    Each inner chain starts from the module's own initial state and only its
    final draw is kept.  Inner chains are farmed out to ``cfg.n_jobs``
    processes; results are merged in index order.
    """
    t0 = time.perf_counter()
    if working is None:
        working = run_working_first_level(first, cfg)
    Z = working.traces["zeta"]
    n_chains, B = Z.shape[:2]
    S = cfg.inner_steps
    jobs = []
    n_blocks = max(1, cfg.n_jobs * 4)
    size = max(1, math.ceil(B / n_blocks))
    for c in range(n_chains):
        for start in range(0, B, size):
            jobs.append((c, start, Z[c, start:start + size]))
    if cfg.n_jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as ex:
            futs = [ex.submit(_cut_block, second, z, cfg.seed, c, s, S) for c, s, z in jobs]
            results = [f.result() for f in futs]
    else:
        results = [_cut_block(second, z, cfg.seed, c, s, S) for c, s, z in jobs]
    per_chain = [_Recorder() for _ in range(n_chains)]
    for (c, start, z), rows in zip(jobs, results):
        for k, r in enumerate(rows):
            per_chain[c].add({"zeta": z[k], **r})
    traces = _merge_chains([r.arrays() for r in per_chain])
    meta = _meta(cfg, "cut", t0, inner_steps=S)
    return PosteriorSamples("cut", traces, meta)


class KLBound(NamedTuple):
    """Upper bound on the cut-to-full divergence.

    ``value`` is infinite when no draw sits at the empty model; ``floor`` is
    then the smallest value the estimate could have shown, ``log(n_draws)``.
    """

    value: float
    n_draws: int
    floor: float

    @property
    def exceeds_floor(self):
        return math.isinf(self.value)


def kl_bound_estimate(full_samples: PosteriorSamples) -> KLBound:
    """``-log`` of the fraction of full-posterior draws with every ``xi_k = 0``."""
    if full_samples.regime != "full":
        raise ValueError("the bound needs full-posterior draws")
    xi = full_samples.pooled("xi")
    n = xi.shape[0]
    if n == 0:
        raise ValueError("empty traces")
    empty = np.all(xi.reshape(n, -1) == 0, axis=1)
    count = int(empty.sum())
    floor = math.log(n)
    if count == 0:
        return KLBound(math.inf, n, floor)
    return KLBound(-math.log(count / n), n, floor)


def threshold_sensitivity(first, second, cfg: ChainConfig, thresholds=(0.25, 0.5, 0.75),
                          working: PosteriorSamples | None = None):
    """Two-step runs at several thresholds ``a2 / (a1 + a2)``, sharing one working run.

    Returns a dict ``threshold -> (samples, median model size)``.
    """
    from .diagnostics import median_model, pip

    if working is None:
        working = run_working_first_level(first, cfg)
    out = {}
    for t in thresholds:
        if not 0.0 < t < 1.0:
            raise ValueError("thresholds must lie in (0, 1)")
        sub = cfg.replace(a1=1.0 - t, a2=t)
        res = run_two_step(first, second, sub, working=working)
        out[t] = (res, int(median_model(pip(res.traces["xi"])).sum()))
    return out
