"""End-to-end acceptance checks, one test per criterion.

Every test appends a ``PASS``/``FAIL`` line (with the measured quantity and
wall time) to the session log printed at the end of the run, then asserts.
"""

import filecmp
import math
import time

import numpy as np
import pytest
from scipy import stats

from cutinfer import cli, io
from cutinfer import linear_pipeline as lp
from cutinfer.diagnostics import median_model, pip
from cutinfer.engine import (
    ChainConfig,
    PosteriorSamples,
    kl_bound_estimate,
    run_cut,
    run_full,
    run_two_step,
    run_working_first_level,
)
from cutinfer.irt import IrtFirstModule, RollCallSettings, simulate_rollcall
from cutinfer.linear_pipeline import PosteriorKind as PK
from cutinfer.polya_gamma import sample_pg
from cutinfer.selection import (
    CovariateMatrix,
    init_select_state,
    mwg_chain,
    sample_zeta_prior,
    SelectionSecondModule,
)

import oracles
from conftest import batch_se


def record(log, num, title, ok, detail, elapsed, limit):
    ok = bool(ok) and (limit is None or elapsed < limit)
    budget = "" if limit is None else f" / {limit:g}s"
    log.append(f"[{'PASS' if ok else 'FAIL'}] {num:>2}. {title}: {detail} ({elapsed:.1f}s{budget})")
    return ok


def random_linear(rng, N=None, J=None, L=None, K=None):
    L = L or int(rng.integers(1, 4))
    J = J or L + int(rng.integers(0, 4))
    K = K or int(rng.integers(1, 4))
    N = N or K + int(rng.integers(1, 6))
    return lp.LinearPipelineConfig(rng.standard_normal((L, J)), rng.standard_normal((N, K)),
                                   float(rng.uniform(0.1, 3)), float(rng.uniform(0.1, 3)))


def rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


# ------------------------------------------------------------------ 1

def test_c01_closed_form_identities(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_m = worst_v = 0.0
    strict = True
    for _ in range(100):
        cfg = random_linear(rng)
        Y = rng.standard_normal((cfg.N, cfg.J))
        f, t, c = (lp.closed_form_posterior(Y, cfg, k) for k in (PK.FULL, PK.TWO_STEP, PK.CUT))
        worst_m = max(worst_m, rel(t.M, c.M))
        worst_v = max(worst_v, rel(f.V, c.V))
        strict &= np.trace(c.V) * np.trace(c.U) > np.trace(t.V) * np.trace(t.U)
    ok = worst_m <= 1e-10 and worst_v <= 1e-10 and strict
    assert record(acceptance_log, 1, "closed-form identities",
                  ok, f"max rel |M_t-M_c|={worst_m:.1e}, |V_f-V_c|={worst_v:.1e}, trace gap strict={strict}",
                  time.perf_counter() - t0, 5)


# ------------------------------------------------------------------ 2

def test_c02_gls_oracle(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    worst = 0.0
    for _ in range(20):
        cfg = random_linear(rng)
        Y = rng.standard_normal((cfg.N, cfg.J))
        M = lp.closed_form_posterior(Y, cfg, PK.FULL).M
        ref = oracles.gls_estimate(Y, cfg.W, cfg.X, cfg.sigma2 * np.eye(cfg.J) + cfg.tau2 * cfg.W.T @ cfg.W)
        worst = max(worst, float(np.max(np.abs(M - ref)) / max(1.0, np.max(np.abs(ref)))))
    assert record(acceptance_log, 2, "GLS oracle", worst < 1e-8, f"max rel error {worst:.1e}",
                  time.perf_counter() - t0, 5)


# ------------------------------------------------------------------ 3

def test_c03_unbiasedness(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(103)
    cfg = random_linear(rng, N=8, J=5, L=2, K=3)
    xi = rng.standard_normal((cfg.K, cfg.L))
    R = 20_000
    Y, _ = lp.simulate(cfg, xi, lp.TrueVariances(cfg.sigma2, cfg.tau2), rng, size=R)
    est = lp.point_estimators(Y, cfg)
    zs = []
    for e in (est.xi_hat, est.xi_tilde):
        se = e.std(axis=0, ddof=1) / np.sqrt(R)
        zs.append(np.max(np.abs(e.mean(axis=0) - xi) / se))
    ok = max(zs) < 3
    assert record(acceptance_log, 3, "unbiasedness", ok,
                  f"max |z| full={zs[0]:.2f}, two-step={zs[1]:.2f} over {R} datasets",
                  time.perf_counter() - t0, 120)


# ------------------------------------------------------------------ 4

def test_c04_misspecification_sandwich(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(104)
    true_cfg = random_linear(rng, N=8, J=5, L=2, K=2)
    tv = lp.TrueVariances(true_cfg.sigma2, true_cfg.tau2)
    # off by a factor 100 in opposite directions so the GLS weighting really changes
    cfg = true_cfg.with_variances(100 * tv.sigma2_star, tv.tau2_star / 100)
    xi = rng.standard_normal((cfg.K, cfg.L))
    R = 20_000
    Y, _ = lp.simulate(cfg, xi, tv, rng, size=R)
    est = lp.point_estimators(Y, cfg)
    errs = []
    for e, kind in ((est.xi_hat, PK.FULL), (est.xi_tilde, PK.TWO_STEP)):
        U, V = lp.estimator_sampling_cov(cfg, tv, kind)
        S = np.kron(V, U)
        C = np.cov(e.reshape(R, -1, order="F").T)  # vec stacks columns
        errs.append(np.linalg.norm(C - S) / np.linalg.norm(S))
    U0, V0 = lp.estimator_sampling_cov(true_cfg, tv, PK.TWO_STEP)
    U1, V1 = lp.estimator_sampling_cov(cfg, tv, PK.TWO_STEP)
    inv = float(max(np.max(np.abs(U0 - U1)), np.max(np.abs(V0 - V1))))
    ok = max(errs) < 0.05 and inv < 1e-10
    assert record(acceptance_log, 4, "misspecification sandwich", ok,
                  f"rel Frobenius full={errs[0]:.3f}, two-step={errs[1]:.3f}; "
                  f"two-step invariance {inv:.1e}", time.perf_counter() - t0, 120)


# ------------------------------------------------------------------ 5

def test_c05_joint_marginal_kl(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(105)
    worst = 0.0
    smallest, largest = math.inf, 0.0
    for _ in range(10):
        cfg = lp.LinearPipelineConfig([[rng.uniform(0.3, 2) * rng.choice([-1, 1])]],
                                      [[rng.uniform(0.3, 2) * rng.choice([-1, 1])]],
                                      rng.uniform(0.2, 2), rng.uniform(0.2, 2))
        y = rng.normal(0, 2)
        # a proper N(0, v) prior on xi makes both divergences non-zero
        r = lp.lemma1_quantities(cfg, y, xi_prior_var=float(rng.uniform(0.2, 3)))
        worst = max(worst, abs(r.kl_joint - r.kl_marginal))
        smallest = min(smallest, r.kl_marginal)
        largest = max(largest, r.kl_marginal)
    assert record(acceptance_log, 5, "joint vs marginal KL (scalar quadrature)", worst < 1e-6,
                  f"max |KL_joint - KL_marginal|={worst:.1e} (KL range {smallest:.2e} to {largest:.2e})",
                  time.perf_counter() - t0, 10)


# ------------------------------------------------------------------ 6

def test_c06_engine_vs_closed_forms(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(106)
    cfg = lp.LinearPipelineConfig(rng.standard_normal((2, 3)), rng.standard_normal((6, 2)), 0.7, 1.3)
    Y = rng.standard_normal((6, 3))
    first, second = lp.LinearFirstModule(Y, cfg), lp.LinearSecondModule(cfg)
    cc = ChainConfig(chains=4, burn_in=200, samples=5000, inner_steps=5, seed=6)
    w = run_working_first_level(first, cc)
    runs = {"full": (run_full(first, second, cc), PK.FULL),
            "two-step": (run_two_step(first, second, cc, working=w), PK.TWO_STEP),
            "cut": (run_cut(first, second, cc, working=w), PK.CUT)}
    parts, ok = [], True
    for name, (res, kind) in runs.items():
        mn = lp.closed_form_posterior(Y, cfg, kind)
        x = res.pooled("xi").reshape(res.n_chains * res.n_draws, -1, order="F")
        se = batch_se(x) if name == "full" else np.sqrt(np.diag(mn.vec_cov()) / x.shape[0])
        z = float(np.max(np.abs(x.mean(axis=0) - mn.vec_mean()) / se))
        S = mn.vec_cov()
        e = float(np.linalg.norm(np.cov(x.T) - S) / np.linalg.norm(S))
        ok &= z < 3 and e < 0.05
        parts.append(f"{name} |z|max={z:.2f} cov err={e:.3f}")
    assert record(acceptance_log, 6, "engine vs closed forms", ok, "; ".join(parts),
                  time.perf_counter() - t0, 180)


# ------------------------------------------------------------------ 7

def test_c07_polya_gamma(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(107)
    worst = 0.0
    for c in (0.0, 1.0, -1.0, 2.0, -2.0, 5.0, -5.0):
        x = sample_pg(1, c, rng, size=100_000)
        m, v = oracles.pg_series_moments(c)
        zm = abs(x.mean() - m) / math.sqrt(v / x.size)
        d2 = (x - x.mean()) ** 2
        zv = abs(d2.mean() - v) / (d2.std() / math.sqrt(x.size))
        worst = max(worst, zm, zv)
    p_sym = stats.ks_2samp(sample_pg(1, 1.5, rng, size=20_000), sample_pg(1, -1.5, rng, size=20_000)).pvalue
    p_add = stats.ks_2samp(sample_pg(2, 0.7, rng, size=20_000),
                           sample_pg(1, 0.7, rng, size=(20_000, 2)).sum(axis=1)).pvalue
    ok = worst < 3 and p_sym > 0.001 and p_add > 0.001
    assert record(acceptance_log, 7, "Polya-Gamma sampler", ok,
                  f"max |z| mean/var={worst:.2f}, KS symmetry p={p_sym:.3f}, additivity p={p_add:.3f}",
                  time.perf_counter() - t0, 60)


# ------------------------------------------------------------------ 8

def test_c08_selection_oracle(acceptance_log):
    t0 = time.perf_counter()
    parts, ok = [], True
    for K, seed in ((1, 81), (2, 82)):
        rng = np.random.default_rng(seed)
        X = CovariateMatrix(rng.standard_normal((10, K)))
        zeta = (X.X @ np.linspace(1.0, -0.5, K) + rng.standard_normal(10) > 0).astype(int)
        _, _, ref = oracles.selection_posterior(X.X, zeta)
        _, tr = mwg_chain(init_select_state(K, 10), zeta, X, rng, n_burn=1000, n_keep=100_000)
        err = float(np.max(np.abs(tr["xi"].mean(axis=0) - ref)))
        ok &= err < 0.02
        parts.append(f"K={K} max |PIP - oracle|={err:.4f}")
    assert record(acceptance_log, 8, "selection-module oracle", ok, "; ".join(parts),
                  time.perf_counter() - t0, 180)


# ------------------------------------------------------------------ 9

def test_c09_working_prior_compatibility(acceptance_log):
    t0 = time.perf_counter()
    z = sample_zeta_prior(10, np.random.default_rng(109), size=100_000)
    counts = np.bincount(z.sum(axis=1), minlength=11)
    p = stats.chisquare(counts).pvalue
    assert record(acceptance_log, 9, "working-prior compatibility", p > 0.001,
                  f"chi-square p={p:.3f}", time.perf_counter() - t0, 30)


# ------------------------------------------------------------------ 10

def test_c10_kl_bound(acceptance_log):
    t0 = time.perf_counter()
    rng = np.random.default_rng(110)
    xi = (rng.random((3, 400, 4)) < 0.3).astype(np.int8)
    freq = np.mean(np.all(xi.reshape(-1, 4) == 0, axis=1))
    exact = kl_bound_estimate(PosteriorSamples("full", {"xi": xi})).value == -math.log(freq)
    half = np.zeros((2, 50, 3), dtype=np.int8)
    half[:, ::2, 1] = 1
    v = kl_bound_estimate(PosteriorSamples("full", {"xi": half})).value
    ok = exact and abs(v - math.log(2)) <= 2 * np.finfo(float).eps
    assert record(acceptance_log, 10, "KL bound", ok,
                  f"equals -log(freq): {exact}; half-mass {v!r}", time.perf_counter() - t0, 1)


# ------------------------------------------------------------------ 11

@pytest.mark.slow
def test_c11_cut_inner_length(acceptance_log):
    t0 = time.perf_counter()
    sim = simulate_rollcall(RollCallSettings(n_legislators=50, n_votes=200, eta0=-0.3,
                                             eta=(1.5, 0.0, 0.0, -1.5, 0.0), alpha_sd=2.0),
                            np.random.default_rng(111))
    first = IrtFirstModule(sim.data)
    second = SelectionSecondModule(CovariateMatrix(sim.X))
    cc = ChainConfig(chains=4, burn_in=500, samples=2500, seed=11)
    w = run_working_first_level(first, cc)
    p200 = pip(run_cut(first, second, cc.replace(inner_steps=200), working=w).traces["xi"])
    p1000 = pip(run_cut(first, second, cc.replace(inner_steps=1000), working=w).traces["xi"])
    d = float(np.max(np.abs(p200 - p1000)))
    assert record(acceptance_log, 11, "cut inner-chain length", d < 0.03,
                  f"max |PIP(S=200) - PIP(S=1000)|={d:.4f}; PIPs S=200 {np.round(p200, 3).tolist()}",
                  time.perf_counter() - t0, 1800)


# ------------------------------------------------------------------ 12

@pytest.mark.slow
def test_c12_regime_ordering_report(acceptance_log):
    t0 = time.perf_counter()
    n_rep, hits = 20, 0
    sizes = []
    for r in range(n_rep):
        sim = simulate_rollcall(RollCallSettings(n_legislators=30, n_votes=60, eta0=0.0,
                                                 eta=(1.5, 0.0, -1.0, 0.0)),
                                np.random.default_rng(1200 + r))
        first = IrtFirstModule(sim.data, tied_sweeps=20)
        second = SelectionSecondModule(CovariateMatrix(sim.X))
        cc = ChainConfig(chains=2, burn_in=300, samples=1000, inner_steps=100, seed=r)
        w = run_working_first_level(first, cc)
        s = [int(median_model(pip(res.traces["xi"])).sum()) for res in (
            run_full(first, second, cc), run_two_step(first, second, cc, working=w),
            run_cut(first, second, cc, working=w))]
        sizes.append(s)
        hits += s[0] >= s[1] >= s[2]
    # report-only: the ordering is an empirical observation, not a theorem
    acceptance_log.append(
        f"[INFO] 12. regime ordering full >= two-step >= cut held in {hits}/{n_rep} replications "
        f"({'majority' if hits > n_rep / 2 else 'no majority'}); sizes {sizes} "
        f"({time.perf_counter() - t0:.1f}s, report-only)")


# ------------------------------------------------------------------ 13

def _cli_pipeline(root):
    fast = ["--set", "chains=2", "--set", "burn_in=50", "--set", "samples=100",
            "--set", "inner_steps=20", "--set", "tied_sweeps=10"]
    data = root / "data"
    codes = [cli.main(["simulate-rollcall", "--out", str(data), "--set", "N=20", "--set", "J=40",
                       "--set", "eta=[1.5, 0.0, -1.0]", "--set", "seed=13"])]
    runs = []
    for regime in ("full", "twostep", "cut"):
        o = root / regime
        codes.append(cli.main(["fit", "--regime", regime, "--rollcall", str(data / "rollcall.csv"),
                               "--votes", str(data / "votes.csv"), "--covariates",
                               str(data / "covariates.csv"), "--out", str(o), *fast]))
        codes.append(cli.main(["diagnose", "--traces", str(o)]))
        runs.append(str(o))
    codes.append(cli.main(["compare", "--runs", *runs, "--out", str(root / "compare")]))
    return codes


def _all_files(root):
    return sorted(str(p.relative_to(root)) for p in root.rglob("*")
                  if p.is_file() and p.name != "timing.json")


def test_c13_cli_end_to_end_reproducible(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    a, b = tmp_path / "a", tmp_path / "b"
    ca, cb = _cli_pipeline(a), _cli_pipeline(b)
    fa, fb = _all_files(a), _all_files(b)
    # manifests record input paths, which differ between the two roots
    same_names = fa == fb
    content = [f for f in fa if not f.endswith("manifest.json")]
    _, mismatch, errors = filecmp.cmpfiles(a, b, content, shallow=False)
    strip = lambda m: {k: v for k, v in m.items() if k != "inputs"}
    man_ok = all(
        strip(io.read_json(a / f)) == strip(io.read_json(b / f))
        and ({k: v["hash"] for k, v in io.read_json(a / f).get("inputs", {}).items()
              if isinstance(v, dict)}
             == {k: v["hash"] for k, v in io.read_json(b / f).get("inputs", {}).items()
                 if isinstance(v, dict)})
        for f in fa if f.endswith("manifest.json"))
    ok = all(c == 0 for c in ca + cb) and same_names and not mismatch and not errors and man_ok
    assert record(acceptance_log, 13, "CLI end-to-end, byte-identical reruns", ok,
                  f"{len(fa)} files, {len(mismatch) + len(errors)} differ, exit codes {sorted(set(ca + cb))}",
                  time.perf_counter() - t0, None)
