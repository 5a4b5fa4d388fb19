"""The named experiments behind the CLI: each takes a RunConfig, runs the
required ensembles or solvers, compares against the appropriate closed-form
or oracle prediction, and returns a JSON-ready payload

    {"experiment", "checks": [...], "pass", "values": {...}, "data_files": [...]}

plus plot-ready CSV files in the output directory.  Statistical checks pass
at |z| <= 3 unless the criterion states a relative tolerance.
"""

from __future__ import annotations

import csv
import math
import os

import numpy as np

from . import dynamics, spde, verify
from .config import RunConfig
from .equilibrium import moments, sample_gibbs, substream, STREAM_SPDE
from .fields import TestFunction, frame_velocity
from .model import ModelParams
from .verify import CheckReport

SQRT2 = math.sqrt(2.0)

# Empirically pinned uniform constants for the boundedness criteria (one
# constant across the whole grid; values chosen with >= 3x margin over
# calibration runs at the default parameters).
BG_UNIFORM_K = 6.0
ENERGY_UNIFORM_K = 2.0


def _overall(checks: list[CheckReport]):
    flags = [c.passed for c in checks]
    known = [f for f in flags if f is not None]
    if not known:
        return None
    return all(known)


def _payload(cfg: RunConfig, checks, values=None, files=None) -> dict:
    return {
        "experiment": cfg.experiment,
        "pass": _overall(checks),
        "checks": [c.to_dict() for c in checks],
        "values": values or {},
        "data_files": files or [],
    }


def _write_csv(outdir: str, name: str, header: list[str], rows) -> str:
    path = os.path.join(outdir, name)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
    return name


def _write_fields_csv(outdir: str, times, zs, y, v) -> str:
    """Normative fields CSV (t, z, Y, V) for the first replica."""
    rows = []
    for i, t in enumerate(times):
        for j, z in enumerate(zs):
            rows.append((float(t), z, float(y[i, 0, j]), float(v[i, 0, j])))
    return _write_csv(outdir, "fields.csv", ["t", "z", "Y", "V"], rows)


def _snapshot_times(cfg: RunConfig) -> np.ndarray:
    return np.linspace(0.0, cfg.T, cfg.snapshot_count + 1)


# ---------------------------------------------------------------------------


def run_moments(cfg: RunConfig, outdir: str) -> dict:
    """Closed-form moments vs the quadrature oracle and vs Monte Carlo."""
    p = cfg.model
    mc = moments(p, "closed")
    mq = moments(p, "quadrature")
    checks = []
    for k in ("rho", "tau2", "v", "sigma2", "delta", "e"):
        closed, quad = getattr(mc, k), getattr(mq, k)
        checks.append(CheckReport(
            quantity=f"{k} closed vs quadrature", empirical=closed, predicted=quad,
            se=None, z_score=None,
            passed=bool(abs(closed - quad) <= 1e-8 * max(1.0, abs(quad)))))
    etas = sample_gibbs(p, cfg.ensemble_size, cfg.seed)
    xis = np.exp(-p.b * etas)
    reps = {
        "rho": xis.mean(axis=1),
        "tau2": ((xis - mc.rho) ** 2).mean(axis=1),
        "v": etas.mean(axis=1),
        "sigma2": ((etas - mc.v) ** 2).mean(axis=1),
        "delta": ((etas - mc.v) * (xis - mc.rho)).mean(axis=1),
        "e": (xis - 1.0 + p.b * etas).mean(axis=1),
    }
    for k, samples in reps.items():
        emp = float(samples.mean())
        se = (float(samples.std(ddof=1) / math.sqrt(samples.size))
              if samples.size > 1 else None)
        if se is None or se == 0.0:
            checks.append(CheckReport(f"{k} sampled", emp, getattr(mc, k), None, None, None))
        else:
            checks.append(CheckReport.from_se(f"{k} sampled", emp, getattr(mc, k), se))
    values = {k: getattr(mc, k) for k in ("rho", "tau2", "v", "sigma2", "delta", "e")}
    f = _write_csv(outdir, "moments.csv", ["quantity", "closed", "quadrature", "sampled"],
                   [(k, getattr(mc, k), getattr(mq, k), float(reps[k].mean()))
                    for k in reps])
    return _payload(cfg, checks, values, [f])


def run_stationarity(cfg: RunConfig, outdir: str) -> dict:
    """One-site moments after evolution to T compared with the invariant
    measure (mean and variance of eta and of xi).

    The time-T ensemble is compared against the closed-form equilibrium
    values with replica-level standard errors.  A paired initial-vs-final
    comparison would be degenerate for the means: the spatial means are
    conserved by construction, so their paired difference only exposes the
    ~1e-8-budget drift integrator bias, not the measure.  The conserved
    means are additionally checked against that integration budget.
    """
    p = cfg.model
    mom = moments(p)
    rec = verify.OneSiteMomentRecorder()
    dynamics.run_ensemble(p, cfg.integrator, [0.0, cfg.T], cfg.ensemble_size,
                          cfg.seed, [rec])
    s0, s1 = rec.stats[0], rec.stats[1]
    checks = []
    labels = ["mean_eta", "second_eta", "mean_xi", "second_xi"]
    predicted = [mom.v, mom.sigma2 + mom.v**2, mom.rho, mom.tau2 + mom.rho**2]
    rows = []
    for j, lab in enumerate(labels):
        vals = s1[:, j]
        emp = float(vals.mean())
        se = (float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else None)
        if se is None or se == 0.0:
            checks.append(CheckReport(f"{lab} at T vs equilibrium", emp,
                                      predicted[j], None, None, None))
        else:
            checks.append(CheckReport.from_se(f"{lab} at T vs equilibrium", emp,
                                              predicted[j], se))
        rows.append((lab, float(s0[:, j].mean()), emp, predicted[j]))
    for j, lab in ((0, "mean_eta"), (2, "mean_xi")):
        drift = float(np.abs(s1[:, j] - s0[:, j]).max())
        scale = max(abs(predicted[j]), 1.0)
        checks.append(CheckReport(
            quantity=f"conserved {lab}: max per-replica drift within 1e-8",
            empirical=drift, predicted=0.0, se=None, z_score=None,
            passed=bool(drift <= 1e-8 * scale)))
    f = _write_csv(outdir, "stationarity.csv",
                   ["statistic", "initial", "final", "equilibrium"], rows)
    return _payload(cfg, checks, {"T": cfg.T}, [f])


def run_qv_limits(cfg: RunConfig, outdir: str) -> dict:
    """Mean realized quadratic variation vs the diffusive-scale limit."""
    p = cfg.model
    mom = moments(p)
    f1 = TestFunction.mode(cfg.modes[0])
    f2 = TestFunction.mode(cfg.modes[1] if len(cfg.modes) > 1 else cfg.modes[0])
    times = _snapshot_times(cfg)
    qv = verify.QVRecorder(f1, f2, mom)
    dynamics.run_ensemble(p, cfg.integrator, times, cfg.ensemble_size, cfg.seed, [qv])
    totals = qv.totals()
    emp = float(totals.mean())
    se = (float(totals.std(ddof=1) / math.sqrt(totals.size))
          if totals.size > 1 else None)
    _, c = frame_velocity(p, mom)
    ceff = 0.0 if p.kappa > 1 else c
    pred = verify.qv_prediction(p, mom, f1, f2, cfg.T, c=ceff)
    if se is None:
        checks = [CheckReport("mean realized QV", emp, pred, None, None, None)]
    else:
        checks = [CheckReport.from_rel("mean realized QV vs limit (5%)", emp, pred,
                                       rel_tol=0.05, se=se)]
    curve = np.concatenate([[0.0], np.cumsum(
        0.5 * np.diff(times) * (qv.integrand[1:] + qv.integrand[:-1]).mean(axis=1))])
    f = _write_csv(outdir, "qv_curve.csv", ["t", "mean_qv", "limit_slope_qv"],
                   [(float(t), float(q), pred * t / cfg.T) for t, q in zip(times, curve)])
    return _payload(cfg, checks, {"prediction": pred, "se": se}, [f])


def run_ou_regime(cfg: RunConfig, outdir: str) -> dict:
    """Two-time (Y, V) covariances vs the joint OU limit, kappa > 1."""
    p = cfg.model
    mom = moments(p)
    times = _snapshot_times(cfg)
    rec = verify.ModeRecorder(list(cfg.modes), mom)
    dynamics.run_ensemble(p, cfg.integrator, times, cfg.ensemble_size, cfg.seed, [rec])
    D = mom.covariance_matrix()
    ou = spde.OUParams(A=p.gamma * np.eye(2), C=p.gamma * D)
    nt = len(times) - 1
    pairs = [(0, 0), (nt // 2, 0), (nt, 0), (nt, nt)]
    checks = verify.covariance_vs_ou(rec.y, rec.v, times, list(cfg.modes), ou, mom, pairs)
    files = [
        _write_fields_csv(outdir, times, list(cfg.modes), rec.y, rec.v),
        _write_csv(outdir, "covariance.csv",
                   ["quantity", "empirical", "predicted", "se", "z"],
                   [(c.quantity, c.empirical, c.predicted, c.se, c.z_score)
                    for c in checks]),
    ]
    zmax = max((abs(c.z_score) for c in checks if c.z_score is not None), default=None)
    return _payload(cfg, checks, {"max_abs_z": zmax}, files)


def _complex_modes(vals_pos: np.ndarray, vals_neg: np.ndarray) -> np.ndarray:
    return (vals_pos + 1j * vals_neg) / SQRT2


def run_drifted_ou_regime(cfg: RunConfig, outdir: str) -> dict:
    """kappa = 1, a = 2: covariances vs the drifted OU pair with
    theta = -2 alpha b (the drift the microscopic decomposition retains)."""
    p = cfg.model
    mom = moments(p)
    _, c = frame_velocity(p, mom)
    theta = -2.0 * p.alpha * p.b
    dop = spde.DriftedOUParams(lam=p.gamma, mu=p.gamma, theta=theta, c=c,
                               a_=2 * p.gamma * mom.tau2, b_=2 * p.gamma * mom.delta,
                               d_=2 * p.gamma * mom.sigma2)
    zs = sorted({s * abs(z) for z in cfg.modes for s in (1, -1)}, key=lambda z: (abs(z), -z))
    times = _snapshot_times(cfg)
    rec = verify.ModeRecorder(zs, mom)
    dynamics.run_ensemble(p, cfg.integrator, times, cfg.ensemble_size, cfg.seed, [rec])
    idx = {z: j for j, z in enumerate(zs)}
    Sigma0 = mom.covariance_matrix()
    checks = []
    nt = len(times) - 1
    for z in sorted({abs(z) for z in cfg.modes}):
        u1_t = _complex_modes(rec.y[nt, :, idx[z]], rec.y[nt, :, idx[-z]])
        u2_t = _complex_modes(rec.v[nt, :, idx[z]], rec.v[nt, :, idx[-z]])
        u1_0 = _complex_modes(rec.y[0, :, idx[z]], rec.y[0, :, idx[-z]])
        u2_0 = _complex_modes(rec.v[0, :, idx[z]], rec.v[0, :, idx[-z]])
        eq, two = verify.drifted_mode_covariances(dop, Sigma0, z, cfg.T)
        emp_pairs = [
            (f"z={z} E[u1_T conj(u1_0)]", u1_t * np.conj(u1_0), two[0, 0]),
            (f"z={z} E[u1_T conj(u2_0)]", u1_t * np.conj(u2_0), two[0, 1]),
            (f"z={z} E[u2_T conj(u1_0)]", u2_t * np.conj(u1_0), two[1, 0]),
            (f"z={z} E[u2_T conj(u2_0)]", u2_t * np.conj(u2_0), two[1, 1]),
            (f"z={z} E[u1_T conj(u2_T)]", u1_t * np.conj(u2_t), eq[0, 1]),
            (f"z={z} E[|u1_T|^2]", u1_t * np.conj(u1_t), eq[0, 0]),
            (f"z={z} E[|u2_T|^2]", u2_t * np.conj(u2_t), eq[1, 1]),
        ]
        for name, prod, pred in emp_pairs:
            for part, fn in (("Re", np.real), ("Im", np.imag)):
                vals = fn(prod)
                se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else None
                pv = float(fn(pred))
                if part == "Im" and name.startswith(f"z={z} E[|"):
                    continue  # diagonal entries are real by construction
                if se is None or se == 0.0:
                    checks.append(CheckReport(f"{part} {name}", float(vals.mean()), pv,
                                              None, None, None))
                else:
                    checks.append(CheckReport.from_se(f"{part} {name}",
                                                      float(vals.mean()), pv, se))
    files = [
        _write_fields_csv(outdir, times, zs, rec.y, rec.v),
        _write_csv(outdir, "covariance.csv",
                   ["quantity", "empirical", "predicted", "se", "z"],
                   [(ck.quantity, ck.empirical, ck.predicted, ck.se, ck.z_score)
                    for ck in checks]),
    ]
    zmax = max((abs(ck.z_score) for ck in checks if ck.z_score is not None), default=None)
    return _payload(cfg, checks, {"theta": theta, "c": c, "max_abs_z": zmax}, files)


def run_transport_regime(cfg: RunConfig, outdir: str) -> dict:
    """kappa < 1, a = kappa + 1: V-modes follow the transport closed form,
    Y-modes are statistically frozen.

    The transport operator coefficient is theta_op = -2 alpha b; tested
    against a fixed f the equation reads V_t(f) = V_0(f)
    - theta_op int Y_0(grad T-_{cs} f) ds (adjoint sign)."""
    p = cfg.model
    mom = moments(p)
    _, c = frame_velocity(p, mom)
    theta_op = -2.0 * p.alpha * p.b
    theta = -theta_op
    zs = sorted({s * abs(z) for z in cfg.modes for s in (1, -1)}, key=lambda z: (abs(z), -z))
    times = _snapshot_times(cfg)
    rec = verify.ModeRecorder(zs, mom)
    dynamics.run_ensemble(p, cfg.integrator, times, cfg.ensemble_size, cfg.seed, [rec])
    idx = {z: j for j, z in enumerate(zs)}
    nt = len(times) - 1
    checks = []
    leak_pred = {}
    for zp in sorted({abs(z) for z in cfg.modes}):
        pred = verify.transport_cov_prediction(mom, theta, c, cfg.T, zp)
        pairs = [
            (f"z={zp} E[V_T(h_z) Y_0(h_z)]",
             rec.v[nt, :, idx[zp]] * rec.y[0, :, idx[zp]], pred["vy0"]),
            (f"z={zp} E[V_T(h_z) Y_0(h_-z)]",
             rec.v[nt, :, idx[zp]] * rec.y[0, :, idx[-zp]], pred["vy0_conj"]),
            (f"z={zp} E[V_T(h_z) V_0(h_z)]",
             rec.v[nt, :, idx[zp]] * rec.v[0, :, idx[zp]], pred["vv0"]),
            (f"z={zp} E[V_T(h_z) V_0(h_-z)]",
             rec.v[nt, :, idx[zp]] * rec.v[0, :, idx[-zp]], pred["vv0_conj"]),
            (f"z={zp} E[V_T(h_z)^2]",
             rec.v[nt, :, idx[zp]] ** 2, pred["vvt"]),
            (f"z={zp} E[Y_T(h_z) Y_0(h_z)]",
             rec.y[nt, :, idx[zp]] * rec.y[0, :, idx[zp]], pred["yy0"]),
        ]
        for name, prod, pv in pairs:
            se = float(prod.std(ddof=1) / math.sqrt(prod.size)) if prod.size > 1 else None
            if se is None or se == 0.0:
                checks.append(CheckReport(name, float(prod.mean()), float(pv), None, None, None))
            else:
                checks.append(CheckReport.from_se(name, float(prod.mean()), float(pv), se))
        # freeze criterion: Y increment variance below the estimator noise
        # floor of the stationary mode variance (3x), for both mode signs
        for z in (zp, -zp):
            dy = rec.y[nt, :, idx[z]] - rec.y[0, :, idx[z]]
            incr_var = float(np.mean(dy**2))
            var0 = float(np.mean(rec.y[0, :, idx[z]] ** 2))
            floor = var0 * math.sqrt(2.0 / max(dy.size - 1, 1))
            checks.append(CheckReport(
                quantity=f"z={z} Var(Y_T - Y_0) within noise floor of 0",
                empirical=incr_var, predicted=0.0, se=floor,
                z_score=incr_var / floor if floor > 0 else None,
                passed=bool(incr_var <= 3.0 * floor)))
        w = (2.0 * np.pi * zp) ** 2
        rate = p.gamma * w * p.theta_n / p.n**2
        leak_pred[f"z={zp}"] = 2.0 * mom.tau2 * (1.0 - math.exp(-rate * cfg.T))
    files = [
        _write_fields_csv(outdir, times, zs, rec.y, rec.v),
        _write_csv(outdir, "covariance.csv",
                   ["quantity", "empirical", "predicted", "se", "z"],
                   [(ck.quantity, ck.empirical, ck.predicted, ck.se, ck.z_score)
                    for ck in checks]),
    ]
    return _payload(cfg, checks,
                    {"theta_operator": theta_op, "theta_tested": theta, "c": c,
                     "finite_n_Y_increment_variance": leak_pred},
                    files)


def run_bg_test(cfg: RunConfig, outdir: str) -> dict:
    """Second-order replacement bound over a grid of (eps, n), plus the exact
    static product-measure value at t -> 0."""
    p0 = cfg.model
    mom = moments(p0)
    eps_list = cfg.options.get("eps_list", [0.05, 0.1, 0.2])
    n_list = cfg.options.get("n_list", [64, 128])
    psi = TestFunction.mode(cfg.modes[0])
    rows = []
    checks = []
    for n in n_list:
        p = ModelParams(**{**p0.__dict__, "n": int(n)})
        recs = [verify.BGRecorder(psi, eps, mom) for eps in eps_list]
        dynamics.run_ensemble(p, cfg.integrator, [0.0, cfg.T], cfg.ensemble_size,
                              cfg.seed + n, [], step_observers=recs)
        psi_norm2 = float(np.mean(psi.lattice_values(n) ** 2))
        for eps, rec in zip(eps_list, recs):
            sq = rec.totals() ** 2
            lhs = float(sq.mean())
            se = float(sq.std(ddof=1) / math.sqrt(sq.size)) if sq.size > 1 else None
            rhs = cfg.T * psi_norm2 * (eps + cfg.T / (eps**2 * n))
            ratio = lhs / rhs
            rows.append((eps, n, lhs, rhs, ratio, se))
            checks.append(CheckReport(
                quantity=f"BG ratio lhs/rhs_shape at eps={eps}, n={n} <= K={BG_UNIFORM_K}",
                empirical=ratio, predicted=BG_UNIFORM_K, se=se, z_score=None,
                passed=bool(ratio <= BG_UNIFORM_K)))
    f = _write_csv(outdir, "bg_grid.csv",
                   ["eps", "n", "lhs", "rhs_shape", "ratio", "lhs_se"], rows)
    return _payload(cfg, checks, {"K": BG_UNIFORM_K}, [f])


def run_scaling_fit(cfg: RunConfig, outdir: str) -> dict:
    """H_{-1} scaling: slope of log Var(quadratic term) vs log n."""
    p0 = cfg.model
    n_list = cfg.options.get("n_list", [64, 128, 256])
    f = TestFunction.mode(cfg.modes[0])
    params_list = [ModelParams(**{**p0.__dict__, "n": int(n)}) for n in n_list]
    fit = verify.h_minus_one_scaling(params_list, f, cfg.T, cfg.ensemble_size,
                                     cfg.seed, cfg.integrator,
                                     snapshots=cfg.snapshot_count)
    sharp = 1.0 - 2.0 * p0.kappa
    crude = 2.0 - 2.0 * p0.kappa
    checks = [
        CheckReport.from_se("fitted slope vs sharp exponent 1-2kappa",
                            fit.slope, sharp, fit.slope_se),
        CheckReport(
            quantity="crude exponent 2-2kappa excluded by >= 3 slope_se",
            empirical=fit.slope, predicted=crude, se=fit.slope_se,
            z_score=(crude - fit.slope) / fit.slope_se,
            passed=bool(abs(crude - fit.slope) >= 3.0 * fit.slope_se)),
    ]
    fcsv = _write_csv(outdir, "scaling.csv", ["n", "log_n", "log_var", "log_var_se"],
                      [(n, float(x), float(y), float(s))
                       for n, x, y, s in zip(n_list, fit.xs, fit.ys, fit.y_se)])
    return _payload(cfg, checks,
                    {"slope": fit.slope, "slope_se": fit.slope_se,
                     "sharp": sharp, "crude": crude}, [fcsv])


def run_sbe_regime(cfg: RunConfig, outdir: str) -> dict:
    """kappa = 1/2, a = 2 substitutes: the quadratic drift term survives at
    kappa = 1/2 (and not at kappa = 1), and the solver-side energy estimate
    is uniformly bounded over eps."""
    p = cfg.model
    mom = moments(p)
    f = TestFunction.mode(cfg.modes[0])
    variances = {}
    for kappa in (p.kappa, 1.0):
        pk = ModelParams(**{**p.__dict__, "kappa": kappa})
        rec = verify.QuadraticTermRecorder(f, moments(pk))
        dynamics.run_ensemble(pk, cfg.integrator, [0.0, cfg.T], cfg.ensemble_size,
                              cfg.seed, [], step_observers=[rec])
        variances[kappa] = verify.variance_with_se(rec.totals())
    v_half, se_half = variances[p.kappa]
    v_one, se_one = variances[1.0]
    checks = [
        CheckReport(
            quantity=f"quadratic term nonvanishing at kappa={p.kappa}: Var >= 5 SE",
            empirical=v_half, predicted=0.0, se=se_half,
            z_score=v_half / se_half if se_half else None,
            passed=bool(se_half and v_half >= 5.0 * se_half)),
        CheckReport(
            quantity="quadratic term suppressed at kappa=1 (factor >= 8)",
            empirical=v_one, predicted=v_half / p.n, se=se_one,
            z_score=None, passed=bool(v_one <= v_half / 8.0)),
    ]
    ratios = _energy_ratios(cfg)
    for eps, ratio in ratios.items():
        checks.append(CheckReport(
            quantity=f"energy estimate ratio at eps={eps} <= K={ENERGY_UNIFORM_K}",
            empirical=ratio, predicted=ENERGY_UNIFORM_K, se=None, z_score=None,
            passed=bool(ratio <= ENERGY_UNIFORM_K)))
    fcsv = _write_csv(outdir, "sbe_regime.csv", ["quantity", "value"],
                      [(f"var_kappa_{p.kappa}", v_half), ("var_kappa_1", v_one)]
                      + [(f"energy_ratio_eps_{eps}", r) for eps, r in ratios.items()])
    return _payload(cfg, checks,
                    {"var_quadratic": {str(k): v[0] for k, v in variances.items()},
                     "energy_ratios": {str(k): v for k, v in ratios.items()}}, [fcsv])


def _energy_ratios(cfg: RunConfig, z_max: int | None = None) -> dict[float, float]:
    """Mean energy-estimate ratios of the stationary Burgers solver over the
    eps grid, with delta = eps/2.

    The quadratic functionals Q^eps are accumulated at every solver step:
    the box-averaged high modes decorrelate on the mode relaxation scale, so
    coarse snapshot quadrature would inflate the left side.  The step is
    chosen well below the fastest retained box scale.
    """
    opts = cfg.options
    z_max = z_max or int(opts.get("z_max", 32))
    A = float(opts.get("sbe_A", cfg.model.gamma))
    B = float(opts.get("sbe_B", cfg.model.b**2 * cfg.model.alpha))
    C = float(opts.get("sbe_C", cfg.model.gamma * moments(cfg.model).tau2))
    T = float(opts.get("sbe_T", 0.25))
    eps_list = opts.get("eps_list", [0.2, 0.1, 0.05])
    n_paths = int(opts.get("sbe_paths", 96))
    f = TestFunction.mode(cfg.modes[0])
    gradf = f.derivative()
    # resolve the relaxation of modes near 1/delta_min = 2/eps_min
    z_fast = min(z_max, math.ceil(2.0 / min(eps_list)))
    dt = min(spde.SBE_CFL / (A * z_max**2),
             float(opts.get("sbe_dt_factor", 1.0)) / (2.0 * A * (2.0 * np.pi * z_fast) ** 2))
    nsteps = math.ceil(T / dt)
    dt = T / nsteps
    rng = substream(cfg.seed, STREAM_SPDE)
    npts = 4 * (z_max + max(1, gradf.max_mode)) + 1
    gradf_vals = gradf(np.arange(npts) / npts)
    coeffs = np.vstack([spde.gaussian_white_state([[C / A]], z_max, rng).coeffs
                        for _ in range(n_paths)])
    acc = {eps: np.zeros(n_paths) for eps in eps_list}
    for k in range(nsteps):
        for eps in eps_list:
            q_e = spde.quadratic_functional_batch(coeffs, eps, gradf_vals)
            q_d = spde.quadratic_functional_batch(coeffs, eps / 2, gradf_vals)
            acc[eps] += dt * (q_e - q_d)
        coeffs = spde.sbe_batch_step(coeffs, A, B, C, dt, rng)
    gnorm = gradf.l2_norm2()
    return {eps: float(np.mean(acc[eps] ** 2) / (eps * T * gnorm)) for eps in eps_list}


def run_spde_only(cfg: RunConfig, outdir: str) -> dict:
    """Solver self-checks: Lyapunov residual, OU autocorrelation, drifted OU
    against the martingale-problem solution, Burgers stationarity and the
    B=0 reduction."""
    p = cfg.model
    mom = moments(p)
    rng = substream(cfg.seed, STREAM_SPDE, 1)
    checks = []
    g = p.gamma
    D0 = mom.covariance_matrix()

    D = spde.lyapunov_solve(g * np.eye(2), g * D0)
    resid = float(np.linalg.norm(g * np.eye(2) @ D + D @ (g * np.eye(2)).T - 2 * g * D0))
    checks.append(CheckReport("Lyapunov residual <= 1e-12", resid, 0.0, None, None,
                              bool(resid <= 1e-12)))

    # OU autocorrelation on modes 1, 2
    ou = spde.OUParams(A=np.array([[g]]), C=np.array([[g * mom.tau2]]))
    R = max(cfg.ensemble_size, 2)
    lag = float(cfg.options.get("ou_lag", 0.01))
    z_list = [1, 2]
    prods = {z: np.empty(R) for z in z_list}
    for r in range(R):
        st = spde.ou_sample_stationary(ou, max(z_list), rng)
        st2 = spde.ou_step(st, ou, lag, rng)
        for z in z_list:
            prods[z][r] = st2.value(0, z) * st.value(0, z)
    for z in z_list:
        pred = mom.tau2 * math.exp(-g * (2 * np.pi * z) ** 2 * lag)
        se = float(prods[z].std(ddof=1) / math.sqrt(R))
        checks.append(CheckReport.from_se(f"OU autocorrelation mode {z}",
                                          float(prods[z].mean()), pred, se))

    # drifted OU with theta=0 vs the exact martingale-problem cross-covariance
    _, c = frame_velocity(p, mom) if p.alpha != 0 else (0.0, 1.0)
    dop = spde.DriftedOUParams(lam=g, mu=g, theta=0.0, c=c, a_=2 * g * mom.tau2,
                               b_=2 * g * mom.delta, d_=2 * g * mom.sigma2)
    t_step = float(cfg.options.get("drifted_t", 0.03))
    u1 = np.empty(R, complex)
    u2 = np.empty(R, complex)
    for r in range(R):
        st = spde.gaussian_white_state(D0, 1, rng)
        st = spde.drifted_ou_step(st, dop, t_step, rng)
        u1[r] = (st.value(0, 1) + 1j * st.value(0, -1)) / SQRT2
        u2[r] = (st.value(1, 1) + 1j * st.value(1, -1)) / SQRT2
    eq, _ = verify.drifted_mode_covariances(dop, D0, 1, t_step)
    prod = u1 * np.conj(u2)
    for part, fn in (("Re", np.real), ("Im", np.imag)):
        vals = fn(prod)
        se = float(vals.std(ddof=1) / math.sqrt(R))
        checks.append(CheckReport.from_se(f"{part} drifted-OU cross covariance (theta=0)",
                                          float(vals.mean()), float(fn(eq[0, 1])), se))

    # transport closed form: one period returns, linearity reflection
    st = spde.gaussian_white_state(D0, 4, rng)
    f1 = TestFunction.mode(1)
    z1, z2 = spde.transport_solve(st, theta=-2.0 * p.alpha * p.b or 1.0, c=1.0, t=1.0, f=f1)
    checks.append(CheckReport("transport one-period return", z2, st.test(1, f1),
                              None, None, bool(abs(z2 - st.test(1, f1)) <= 1e-10)))

    # Burgers: B=0 pathwise equality and stationary mode variances
    rng_a = substream(cfg.seed, STREAM_SPDE, 2)
    rng_b = substream(cfg.seed, STREAM_SPDE, 2)
    z_max = int(cfg.options.get("z_max", 64))
    A_, B_, C_ = g, p.b**2 * p.alpha, g * mom.tau2
    st_a = spde.gaussian_white_state([[C_ / A_]], z_max, rng_a)
    st_b = spde.gaussian_white_state([[C_ / A_]], z_max, rng_b)
    dt = spde.SBE_CFL / (A_ * z_max**2)
    same = True
    for _ in range(5):
        st_a = spde.sbe_step(st_a, A_, 0.0, C_, dt, rng_a)
        st_b = spde.ou_step(st_b, spde.OUParams([[A_]], [[C_]]), dt, rng_b)
        same = same and np.array_equal(st_a.coeffs, st_b.coeffs)
    checks.append(CheckReport("sbe_step B=0 reproduces ou_step pathwise",
                              float(same), 1.0, None, None, bool(same)))

    T_st = float(cfg.options.get("sbe_T", 1.0))
    var, worst = _sbe_stationary_variance(A_, B_ if B_ != 0 else 1.0, C_, z_max,
                                          T_st, max(cfg.ensemble_size, 2), cfg.seed)
    checks.append(CheckReport(
        quantity="SBE stationary mode variance within 5% of C/A (worst mode)",
        empirical=worst, predicted=C_ / A_, se=None, z_score=None,
        passed=bool(abs(worst - C_ / A_) <= 0.05 * C_ / A_)))
    fcsv = _write_csv(outdir, "sbe_mode_variance.csv", ["z", "variance"],
                      [(z, float(v)) for z, v in enumerate(var) if z > 0])
    return _payload(cfg, checks, {"backend": dynamics.BACKEND}, [fcsv])


def _sbe_stationary_variance(A, B, C, z_max, T, n_paths, seed):
    """Time-averaged Var(Y(h_z)) per mode over stationary Burgers paths
    (batched across paths); returns (variances indexed by z, worst mode)."""
    rng = substream(seed, STREAM_SPDE, 3)
    dt = spde.SBE_CFL / (A * z_max**2)
    nsteps = math.ceil(T / dt)
    dt = T / nsteps
    coeffs = np.vstack([spde.gaussian_white_state([[C / A]], z_max, rng).coeffs
                        for _ in range(n_paths)])
    acc = np.zeros(z_max + 1)
    cnt = 0
    for k in range(nsteps):
        coeffs = spde.sbe_batch_step(coeffs, A, B, C, dt, rng)
        if k % 20 == 19:
            acc += np.mean(2.0 * coeffs.real**2, axis=0)
            cnt += 1
    var = acc / cnt
    worst = var[1:][np.argmax(np.abs(var[1:] - C / A))]
    return var, float(worst)


RUNNERS = {
    "moments": run_moments,
    "stationarity": run_stationarity,
    "qv_limits": run_qv_limits,
    "ou_regime": run_ou_regime,
    "drifted_ou_regime": run_drifted_ou_regime,
    "transport_regime": run_transport_regime,
    "sbe_regime": run_sbe_regime,
    "bg_test": run_bg_test,
    "scaling_fit": run_scaling_fit,
    "spde_only": run_spde_only,
}
