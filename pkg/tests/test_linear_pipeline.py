import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cutinfer import linear_pipeline as lp
from cutinfer.linear_pipeline import PosteriorKind as PK
from cutinfer.mvn import DimensionError

import oracles


def make_cfg(rng, N=6, J=5, L=2, K=2, s2=0.8, t2=1.3):
    return lp.LinearPipelineConfig(rng.standard_normal((L, J)), rng.standard_normal((N, K)), s2, t2)


def gls_oracle(Y, cfg):
    return oracles.gls_estimate(Y, cfg.W, cfg.X, lp.omega(cfg))


def test_omega_identity():
    cfg = lp.LinearPipelineConfig(np.eye(2), np.eye(2), 1.0, 1.0)
    assert np.array_equal(lp.omega(cfg), 2 * np.eye(2))


def test_omega_small_tau():
    cfg = lp.LinearPipelineConfig(np.eye(2), np.eye(2), 0.5, 1e-12)
    assert np.allclose(lp.omega(cfg), 0.5 * np.eye(2), atol=1e-10, rtol=0)


def test_omega_dense_loop(rng):
    W = rng.standard_normal((2, 4))
    cfg = lp.LinearPipelineConfig(W, np.eye(3)[:, :1] + 1, 0.3, 2.0)
    ref = np.zeros((4, 4))
    for a in range(4):
        for b in range(4):
            ref[a, b] = 0.3 * (a == b) + 2.0 * sum(W[l, a] * W[l, b] for l in range(2))
    assert np.allclose(lp.omega(cfg), ref, atol=1e-14)


def test_config_validation(rng):
    with pytest.raises(lp.RankDeficientError):
        lp.LinearPipelineConfig(np.ones((2, 4)), rng.standard_normal((5, 2)), 1, 1)
    X = rng.standard_normal((5, 1))
    with pytest.raises(lp.RankDeficientError):
        lp.LinearPipelineConfig(rng.standard_normal((2, 4)), np.hstack([X, 2 * X]), 1, 1)
    with pytest.raises(DimensionError):
        lp.LinearPipelineConfig(rng.standard_normal((4, 2)), rng.standard_normal((5, 2)), 1, 1)
    with pytest.raises(ValueError):
        lp.LinearPipelineConfig(rng.standard_normal((2, 4)), rng.standard_normal((5, 2)), 1, 0)


def test_simulate_noiseless_limit(rng):
    cfg = make_cfg(rng)
    xi = rng.standard_normal((cfg.K, cfg.L))
    Y, zeta = lp.simulate(cfg, xi, lp.TrueVariances(1e-12, 1e-12), rng)
    assert np.allclose(Y, cfg.X @ xi @ cfg.W, atol=1e-5)


def test_simulate_deterministic(rng):
    cfg = make_cfg(rng)
    xi = np.ones((cfg.K, cfg.L))
    tv = lp.TrueVariances(1.0, 1.0)
    a = lp.simulate(cfg, xi, tv, np.random.default_rng(3))
    b = lp.simulate(cfg, xi, tv, np.random.default_rng(3))
    assert all(np.array_equal(u, v) for u, v in zip(a, b))


def test_simulate_covariance(rng):
    cfg = make_cfg(rng, N=2, J=3, L=2, K=1)
    xi = rng.standard_normal((1, 2))
    tv = lp.TrueVariances(0.5, 2.0)
    Y, _ = lp.simulate(cfg, xi, tv, rng, size=10_000)
    R = (Y - cfg.X @ xi @ cfg.W).reshape(len(Y), -1, order="F")
    exact = np.kron(lp.omega(cfg, 0.5, 2.0), np.eye(2))
    emp = np.cov(R.T)
    assert np.linalg.norm(emp - exact) / np.linalg.norm(exact) < 0.05


def test_identity_design_example(rng):
    cfg = lp.LinearPipelineConfig(np.eye(2), np.eye(2), 1.0, 1.0)
    Y = rng.standard_normal((2, 2))
    f = lp.closed_form_posterior(Y, cfg, PK.FULL)
    t = lp.closed_form_posterior(Y, cfg, PK.TWO_STEP)
    c = lp.closed_form_posterior(Y, cfg, PK.CUT)
    for d in (f, t, c):
        assert np.allclose(d.M, Y) and np.allclose(d.U, np.eye(2))
    assert np.allclose(f.V, 2 * np.eye(2))
    assert np.allclose(t.V, np.eye(2))
    assert np.allclose(c.V, 2 * np.eye(2))


def test_full_mean_matches_gls(rng):
    for _ in range(5):
        cfg = make_cfg(rng)
        Y = rng.standard_normal((cfg.N, cfg.J))
        M = lp.closed_form_posterior(Y, cfg, PK.FULL).M
        assert np.allclose(M, gls_oracle(Y, cfg), rtol=1e-8, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), L=st.integers(1, 3), extraJ=st.integers(0, 3),
       K=st.integers(1, 3), extraN=st.integers(0, 4),
       s2=st.floats(0.05, 20), t2=st.floats(0.05, 20))
def test_closed_form_identities(seed, L, extraJ, K, extraN, s2, t2):
    r = np.random.default_rng(seed)
    cfg = make_cfg(r, N=K + extraN, J=L + extraJ, L=L, K=K, s2=s2, t2=t2)
    Y = r.standard_normal((cfg.N, cfg.J))
    f = lp.closed_form_posterior(Y, cfg, PK.FULL)
    t = lp.closed_form_posterior(Y, cfg, PK.TWO_STEP)
    c = lp.closed_form_posterior(Y, cfg, PK.CUT)
    assert np.allclose(t.M, c.M, rtol=1e-10, atol=0)
    # V_f is computed as (W Omega^-1 W^T)^-1 so this checks the Woodbury identity
    assert np.allclose(f.V, c.V, rtol=1e-10, atol=1e-12 * np.abs(c.V).max())
    assert np.trace(np.kron(c.V, c.U)) > np.trace(np.kron(t.V, t.U))


def test_working_and_conditional(rng):
    cfg = make_cfg(rng)
    Y = rng.standard_normal((cfg.N, cfg.J))
    w = lp.closed_form_posterior(Y, cfg, PK.WORKING_FIRST_LEVEL)
    WWt_inv = np.linalg.inv(cfg.W @ cfg.W.T)
    assert np.allclose(w.M, Y @ cfg.W.T @ WWt_inv)
    assert np.allclose(w.U, np.eye(cfg.N)) and np.allclose(w.V, cfg.sigma2 * WWt_inv)
    zeta = rng.standard_normal((cfg.N, cfg.L))
    c = lp.closed_form_posterior(None, cfg, PK.SECOND_CONDITIONAL, zeta=zeta)
    XtX_inv = np.linalg.inv(cfg.X.T @ cfg.X)
    assert np.allclose(c.M, XtX_inv @ cfg.X.T @ zeta)
    assert np.allclose(c.U, XtX_inv) and np.allclose(c.V, cfg.tau2 * np.eye(cfg.L))
    # two-step posterior is the conditional at the working mean
    t = lp.closed_form_posterior(Y, cfg, PK.TWO_STEP)
    c2 = lp.closed_form_posterior(None, cfg, PK.SECOND_CONDITIONAL, zeta=w.M)
    assert np.allclose(t.M, c2.M) and np.allclose(t.V, c2.V)


def test_zeta_argument_rules(rng):
    cfg = make_cfg(rng)
    Y = rng.standard_normal((cfg.N, cfg.J))
    with pytest.raises(ValueError):
        lp.closed_form_posterior(Y, cfg, PK.FULL, zeta=np.zeros((cfg.N, cfg.L)))
    with pytest.raises(ValueError):
        lp.closed_form_posterior(Y, cfg, PK.SECOND_CONDITIONAL)
    with pytest.raises(DimensionError):
        lp.closed_form_posterior(Y[:, :-1], cfg, PK.CUT)


def test_small_sigma_limit(rng):
    # as sigma2 -> 0 the three posteriors coincide
    cfg = make_cfg(rng, s2=1e-9)
    Y = rng.standard_normal((cfg.N, cfg.J))
    f = lp.closed_form_posterior(Y, cfg, PK.FULL)
    t = lp.closed_form_posterior(Y, cfg, PK.TWO_STEP)
    assert np.allclose(f.V, t.V, atol=1e-6)
    assert np.allclose(f.M, t.M, atol=1e-4)


def test_point_estimators_vectorized(rng):
    cfg = make_cfg(rng)
    Ys = rng.standard_normal((4, cfg.N, cfg.J))
    est = lp.point_estimators(Ys, cfg)
    for r in range(4):
        one = lp.point_estimators(Ys[r], cfg)
        assert np.allclose(est.xi_hat[r], one.xi_hat)
        assert np.allclose(est.xi_tilde[r], one.xi_tilde)
        assert np.allclose(one.xi_hat, lp.closed_form_posterior(Ys[r], cfg, PK.FULL).M)


def test_sampling_cov_at_true_variances(rng):
    cfg = make_cfg(rng)
    tv = lp.TrueVariances(cfg.sigma2, cfg.tau2)
    Y = np.zeros((cfg.N, cfg.J))
    U, V = lp.estimator_sampling_cov(cfg, tv, PK.FULL)
    f = lp.closed_form_posterior(Y, cfg, PK.FULL)
    assert np.allclose(U, f.U) and np.allclose(V, f.V)
    U, V = lp.estimator_sampling_cov(cfg, tv, PK.TWO_STEP)
    c = lp.closed_form_posterior(Y, cfg, PK.CUT)
    assert np.allclose(V, c.V)


def test_two_step_estimator_cov_ignores_fitted_variances(rng):
    cfg = make_cfg(rng)
    tv = lp.TrueVariances(2.0, 0.3)
    a = lp.estimator_sampling_cov(cfg, tv, PK.TWO_STEP)
    b = lp.estimator_sampling_cov(cfg.with_variances(200.0, 0.003), tv, PK.TWO_STEP)
    assert np.array_equal(a[0], b[0]) and np.allclose(a[1], b[1], rtol=1e-12)
    with pytest.raises(ValueError):
        lp.estimator_sampling_cov(cfg, tv, PK.CUT)


def kl_scalar_oracle(y, w, x, s2, t2, v):
    """Exact KLs for the scalar pipeline with xi ~ N(0, v)."""
    P = np.array([[w * w / s2 + 1 / t2, -x / t2], [-x / t2, x * x / t2 + 1 / v]])
    Sf = np.linalg.inv(P)
    mf = Sf @ np.array([w * y / s2, 0.0])
    mz, vz = y / w, s2 / w ** 2
    pc = x * x / t2 + 1 / v
    g = x / t2 / pc  # E[xi | zeta] = g zeta
    mc = np.array([mz, g * mz])
    Sc = np.array([[vz, g * vz], [g * vz, g * g * vz + 1 / pc]])

    def kl(m0, S0, m1, S1):
        S1i = np.linalg.inv(S1)
        d = m1 - m0
        return 0.5 * (np.trace(S1i @ S0) + d @ S1i @ d - len(m0)
                      + np.log(np.linalg.det(S1) / np.linalg.det(S0)))

    return kl(mc, Sc, mf, Sf), kl(mc[:1], Sc[:1, :1], mf[:1], Sf[:1, :1])


def test_joint_marginal_kl_flat_prior_is_zero(rng):
    cfg = lp.LinearPipelineConfig([[1.3]], [[0.7]], 0.5, 2.0)
    res = lp.lemma1_quantities(cfg, 0.9)
    assert abs(res.kl_joint) < 1e-8 and abs(res.kl_marginal) < 1e-8


def test_joint_marginal_kl_quadrature_matches_oracle(rng):
    for _ in range(3):
        w, x = rng.uniform(0.5, 2, 2) * rng.choice([-1, 1], 2)
        s2, t2, v = rng.uniform(0.2, 3, 3)
        y = rng.normal(0, 2)
        cfg = lp.LinearPipelineConfig([[w]], [[x]], s2, t2)
        res = lp.lemma1_quantities(cfg, y, xi_prior_var=v)
        kj, km = kl_scalar_oracle(y, w, x, s2, t2, v)
        assert res.kl_joint == pytest.approx(kj, abs=1e-7)
        assert res.kl_marginal == pytest.approx(km, abs=1e-7)
        assert abs(res.kl_joint - res.kl_marginal) < 1e-6


def test_joint_marginal_kl_requires_scalar(rng):
    with pytest.raises(DimensionError):
        lp.lemma1_quantities(make_cfg(rng), 0.0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_gaussian_kl_pair_identity(seed):
    r = np.random.default_rng(seed)
    cfg = make_cfg(r, N=4, J=3, L=2, K=2, s2=r.uniform(0.1, 3), t2=r.uniform(0.1, 3))
    Y = r.standard_normal((4, 3))
    kj, km = lp.gaussian_kl_pair(Y, cfg)
    assert kj >= -1e-10
    assert kj == pytest.approx(km, abs=1e-8)


def test_conditional_sweep_moments(rng):
    # Gibbs step for zeta | xi, Y: rows iid Gaussian with precision W W^T/s2 + I/t2
    cfg = make_cfg(rng, N=3, J=4, L=2, K=1)
    Y = rng.standard_normal((3, 4))
    first = lp.LinearFirstModule(Y, cfg)
    second = lp.LinearSecondModule(cfg)
    xi = rng.standard_normal((1, 2))
    zp = second.zeta_prior(xi)
    draws = np.stack([first.sweep_conditional(None, zp, rng) for _ in range(20_000)])
    prec = cfg.W @ cfg.W.T / cfg.sigma2 + np.eye(2) / cfg.tau2
    cov = np.linalg.inv(prec)
    mean = (Y @ cfg.W.T / cfg.sigma2 + cfg.X @ xi / cfg.tau2) @ cov
    se = np.sqrt(np.diag(cov) / len(draws))
    assert np.all(np.abs(draws.mean(0) - mean) < 4 * se)
    emp = np.cov(draws[:, 0, :].T)
    assert np.linalg.norm(emp - cov) / np.linalg.norm(cov) < 0.05
