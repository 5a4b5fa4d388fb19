import math

import numpy as np
import pytest

from oracles import bg_static_second_moment
from ringflux import dynamics, spde, verify
from ringflux.dynamics import IntegratorSpec, Trajectory, evolve
from ringflux.equilibrium import moments, sample_gibbs
from ringflux.fields import TestFunction
from ringflux.model import ModelParams


def test_martingale_residual_static_process_is_zero(rng):
    p = ModelParams(b=1.0, gamma=0.0, alpha=0.0, n=16)
    eta = sample_gibbs(p, 1, 1)[0]
    traj = evolve(eta, p, IntegratorSpec(dt=0.01), 0.1, np.linspace(0, 0.1, 6), 2)
    res = verify.martingale_residual(traj, p, TestFunction.mode(1), TestFunction.mode(2))
    assert np.allclose(res, 0.0, atol=1e-12)


def test_martingale_centering_and_isometry_small_n():
    p = ModelParams(b=1.0, gamma=1.0, alpha=1.0, kappa=1.0, a=2.0, n=32)
    mom = moments(p)
    f1 = f2 = TestFunction.mode(1)
    times = np.linspace(0, 0.25, 101)
    rec = verify.PairFieldRecorder(f1, f2, mom)
    qv = verify.QVRecorder(f1, f2, mom)
    dynamics.run_ensemble(p, IntegratorSpec(), times, 2000, 42, [rec, qv])
    res = rec.residuals()
    for ti in (25, 50, 100):
        m = res[ti].mean()
        se = res[ti].std(ddof=1) / math.sqrt(res.shape[1])
        assert abs(m) <= 3 * se
    var_n = res[-1].var(ddof=1)
    mean_qv = qv.totals().mean()
    assert abs(var_n - mean_qv) <= 0.10 * mean_qv  # SE(var) ~ 3% at R=2000


def test_residuals_match_trajectory_variant():
    p = ModelParams(b=1.0, gamma=1.0, alpha=0.7, kappa=1.0, a=2.0, n=16)
    eta = sample_gibbs(p, 1, 3)[0]
    times = np.linspace(0, 0.02, 9)
    traj = evolve(eta, p, IntegratorSpec(), 0.02, times, 4)
    f1, f2 = TestFunction.mode(1), TestFunction.mode(-2)
    res = verify.martingale_residual(traj, p, f1, f2)
    assert res.shape == times.shape
    assert res[0] == 0.0


def test_bg_static_oracle_vs_monte_carlo():
    # static process (gamma = alpha = 0): lhs = t^2 E[G^2] with the exact
    # product-measure fourth-moment value from the oracle
    p = ModelParams(b=1.0, gamma=0.0, alpha=0.0, n=32, beta=1.0, lam=0.0)
    eps, t = 0.25, 0.3
    psi = TestFunction.mode(1)
    trajs = []
    for seed in range(600):
        eta = sample_gibbs(p, 1, seed)[0]
        trajs.append(Trajectory(times=np.array([0.0, t]),
                                states=np.vstack([eta, eta])))
    lhs, rhs_shape, se = verify.bg_second_order_test(trajs, p, psi, eps, t)
    exact = t**2 * bg_static_second_moment(psi.lattice_values(p.n), p.n, eps,
                                           p.lam + 1.0, p.beta)
    assert abs(lhs - exact) <= 3 * se
    assert rhs_shape > 0
    # psi = 0 gives exactly zero
    lhs0, _, _ = verify.bg_second_order_test(trajs[:5], p, TestFunction.zero(), eps, t)
    assert lhs0 == 0.0


def test_scaling_fit_recovers_synthetic_slope(rng):
    ns = np.array([64, 128, 256, 512])
    true_slope, true_icpt = 1.5, -2.0
    var_se_rel = 0.04
    ys = true_icpt + true_slope * np.log(ns) + rng.normal(0, var_se_rel, ns.size)
    variances = np.exp(ys)
    fit = verify.fit_log_variance(ns, variances, var_se_rel * variances)
    assert abs(fit.slope - true_slope) <= 2 * fit.slope_se


def test_scaling_fit_rejects_degenerate_input():
    with pytest.raises(ValueError):
        verify.fit_log_variance([64, 128], [1.0, 1.0], [0.1, 0.1])
    with pytest.raises(ValueError):
        verify.fit_log_variance([64, 128, 256], [1.0, 0.0, 1.0], [0.1, 0.1, 0.1])
    p = ModelParams(alpha=0.0, n=8)
    with pytest.raises(ValueError):
        verify.h_minus_one_scaling([p, p, p], TestFunction.mode(1), 0.1, 10, 1)


def test_covariance_vs_ou_on_exact_solver_paths(rng):
    # estimator machinery validated against the exact OU solver itself
    D0 = np.array([[1.0, -0.5], [-0.5, 1.2]])
    g = 1.0
    p = spde.OUParams(A=g * np.eye(2), C=g * D0)
    R, zs, dt = 3000, [1, 2], 0.01
    times = np.array([0.0, dt])
    y = np.empty((2, R, len(zs)))
    v = np.empty_like(y)
    for r in range(R):
        st = spde.ou_sample_stationary(p, max(zs), rng)
        st2 = spde.ou_step(st, p, dt, rng)
        for j, z in enumerate(zs):
            y[0, r, j] = st.value(0, z)
            v[0, r, j] = st.value(1, z)
            y[1, r, j] = st2.value(0, z)
            v[1, r, j] = st2.value(1, z)
    reports = verify.covariance_vs_ou(y, v, times, zs, p, None,
                                      [(0, 0), (1, 0), (1, 1)])
    zscores = [abs(c.z_score) for c in reports if c.z_score is not None]
    assert len(zscores) == 3 * len(zs) * 4
    assert np.mean([z <= 3 for z in zscores]) >= 0.9
    assert np.max(zscores) <= 4.5


def test_ensemble_stats_and_reports():
    samples = {"a": np.array([1.0, 2.0, 3.0]), "b": np.array([2.0, 4.0, 6.0])}
    st = verify.EnsembleStats.from_samples(samples)
    assert st.count == 3
    assert st.mean["a"] == pytest.approx(2.0)
    assert st.cov[("a", "b")] == pytest.approx(2.0)
    assert st.se["a"] == pytest.approx(1.0 / math.sqrt(3))
    rep = verify.CheckReport.from_se("x", 1.0, 1.05, 0.05)
    assert rep.passed is True and rep.z_score == pytest.approx(-1.0)
    rep2 = verify.CheckReport.from_se("x", 1.0, 2.0, None)
    assert rep2.passed is None
    d = rep.to_dict()
    assert set(d) == {"quantity", "empirical", "predicted", "se", "z_score", "pass"}


def test_qv_prediction_cross_term_limits():
    p = ModelParams(b=1.0, gamma=1.0, alpha=1.0, kappa=1.0, a=2.0, n=64)
    mom = moments(p)
    f = TestFunction.mode(1)
    # c -> 0 continuity of the cross term
    small = verify.qv_prediction(p, mom, f, f, 0.2, c=1e-8)
    zero = verify.qv_prediction(p, mom, f, f, 0.2, c=0.0)
    assert small == pytest.approx(zero, rel=1e-6)
    # one full frame period cancels the cross term entirely
    full = verify.qv_prediction(p, mom, f, f, 1.0, c=1.0)
    base = 2 * 1.0 * (mom.tau2 + mom.sigma2) * f.derivative().l2_norm2()
    assert full == pytest.approx(base, rel=1e-12)


def test_integrated_shifted_gradient_matches_quadrature():
    from scipy.integrate import quad

    f = TestFunction({1: 0.8, -3: 0.5})
    c, t = 1.3, 0.27
    G = verify.integrated_shifted_gradient(f, c, t)
    for x in (0.0, 0.31, 0.77):
        direct = quad(lambda s: f.derivative().shifted(-c * s)(x), 0, t,
                      epsabs=1e-12, epsrel=1e-12)[0]
        assert G(x) == pytest.approx(direct, abs=1e-10)


def test_generator_action_matches_dynkin_rate(rng):
    # E[ (Z_{t+h}.f - Z_t.f) / h | state ] -> generator action as h -> 0:
    # checked against an ensemble of one-step evolutions from a fixed state
    p = ModelParams(b=1.0, gamma=1.0, alpha=0.8, kappa=1.0, a=2.0, n=16)
    mom = moments(p)
    f1, f2 = TestFunction.mode(1), TestFunction.mode(-1)
    eta0 = sample_gibbs(p, 1, 12)[0]
    xi0 = np.exp(-p.b * eta0)
    act = verify.generator_action(xi0[None, :], p, mom, f1, f2, 0.0)[0]
    h = 2e-6
    R = 20000
    vals = np.empty(R)
    from ringflux.fields import frame_offset
    for r in range(R):
        traj = evolve(eta0, p, IntegratorSpec(dt=h), h, [0.0, h], 100 + r)
        for (i, t) in ((0, 0.0), (1, h)):
            xi = np.exp(-p.b * traj.states[i])
            F1 = f1.lattice_values(p.n, shift=frame_offset(p, t, mom))
            F2 = f2.lattice_values(p.n)
            z = ((xi - mom.rho) @ F1 + (traj.states[i] - mom.v) @ F2) / math.sqrt(p.n)
            if i == 0:
                z0 = z
        vals[r] = (z - z0) / h
    se = vals.std(ddof=1) / math.sqrt(R)
    assert abs(vals.mean() - act) <= 3 * se
