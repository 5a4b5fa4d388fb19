"""Statistical machinery connecting microscopic ensembles to the SPDE
predictions: streaming observers for the ensemble runner, martingale
residuals against the exact generator compensator, quadratic-variation and
Boltzmann-Gibbs estimators, scaling fits, and the closed-form covariance
predictions of the limit equations.

Conventions.  All ensemble estimators report a standard error, and checks
are summarized as z-scores; "pass" means |z| <= 3 unless a criterion
states another tolerance.  Estimators are deterministic folds over the
replica axis, so results do not depend on scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .equilibrium import Moments, moments
from .fields import TestFunction, batch_mode_values, box_average_all, frame_offset, frame_velocity
from .model import ModelParams
from . import dynamics

__all__ = [
    "CheckReport",
    "EnsembleStats",
    "ScalingFit",
    "generator_action",
    "martingale_residual",
    "bg_second_order_test",
    "h_minus_one_scaling",
    "covariance_vs_ou",
]


@dataclass
class CheckReport:
    """One quantitative comparison: empirical value vs prediction."""

    quantity: str
    empirical: float
    predicted: float
    se: float | None
    z_score: float | None
    passed: bool | None

    @classmethod
    def from_se(cls, quantity, empirical, predicted, se, z_limit=3.0):
        if se is None or not np.isfinite(se) or se == 0.0:
            return cls(quantity, float(empirical), float(predicted), None, None, None)
        z = (empirical - predicted) / se
        return cls(quantity, float(empirical), float(predicted), float(se),
                   float(z), bool(abs(z) <= z_limit))

    @classmethod
    def from_rel(cls, quantity, empirical, predicted, rel_tol, se=None):
        rel = abs(empirical - predicted) / abs(predicted)
        return cls(quantity, float(empirical), float(predicted),
                   None if se is None else float(se),
                   float(rel / rel_tol), bool(rel <= rel_tol))

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "empirical": self.empirical,
            "predicted": self.predicted,
            "se": self.se,
            "z_score": self.z_score,
            "pass": self.passed,
        }


@dataclass
class EnsembleStats:
    """Means, covariances and standard errors over a replica sample."""

    count: int
    mean: dict
    cov: dict
    se: dict

    @classmethod
    def from_samples(cls, samples: dict[str, np.ndarray]) -> "EnsembleStats":
        keys = list(samples)
        count = len(next(iter(samples.values())))
        mean = {k: float(np.mean(v)) for k, v in samples.items()}
        se = {}
        cov = {}
        if count >= 2:
            for k, v in samples.items():
                se[k] = float(np.std(v, ddof=1) / math.sqrt(count))
            for i, ki in enumerate(keys):
                for kj in keys[i:]:
                    cij = float(np.cov(samples[ki], samples[kj], ddof=1)[0, 1])
                    cov[(ki, kj)] = cij
                    cov[(kj, ki)] = cij
        return cls(count=count, mean=mean, cov=cov, se=se)


@dataclass
class ScalingFit:
    """Weighted least-squares fit of log-variance against log n."""

    xs: np.ndarray
    ys: np.ndarray
    y_se: np.ndarray
    slope: float
    slope_se: float
    intercept: float


# ---------------------------------------------------------------------------
# exact generator compensator and observers


def generator_action(xi_block: np.ndarray, params: ModelParams, mom: Moments,
                     f1: TestFunction, f2: TestFunction, t: float) -> np.ndarray:
    """Exact (d/ds + theta(n) L) applied to the pair field Z_s . (f1, f2),
    evaluated on a (R, n) block of xi at macroscopic time t.

    Four pieces: the exchange Laplacian term, the volume-current gradient
    term, the quadratic term from the Hamiltonian action on the xi field,
    and the frame term from the time derivative of the shifted test
    function (continuum gradient).
    """
    xi = np.atleast_2d(xi_block)
    n = params.n
    shift = frame_offset(params, t, mom)
    F1 = f1.lattice_values(n, shift=shift)
    F2 = f2.lattice_values(n)
    dF1c = f1.derivative().lattice_values(n, shift=shift)
    lap1 = n * n * (np.roll(F1, -1) + np.roll(F1, 1) - 2.0 * F1)
    lap2 = n * n * (np.roll(F2, -1) + np.roll(F2, 1) - 2.0 * F2)
    g1 = n * (np.roll(F1, -1) - F1)
    g2 = n * (np.roll(F2, -1) - F2)

    xic = xi - mom.rho
    etac = -np.log(xi) / params.b - mom.v
    rootn = math.sqrt(n)
    pref = params.theta_n * params.alpha_n / n**1.5
    cn, _ = frame_velocity(params, mom)

    term_lap = (params.gamma * params.theta_n / n**2) * (xic @ lap1 + etac @ lap2) / rootn
    xir = np.roll(xic, -1, axis=1)
    term_gradv = params.b * pref * ((xic + xir) @ g2)
    term_quad = -params.b**2 * pref * ((xic * xir) @ g1 + mom.rho * ((xic + xir) @ g1))
    term_frame = cn / rootn * (xic @ dF1c)
    return term_lap + term_gradv + term_quad + term_frame


def quadratic_term(xi_block: np.ndarray, params: ModelParams, mom: Moments,
                   f: TestFunction, t: float) -> np.ndarray:
    """The centered quadratic sum with its natural prefactor,

        b^2 theta(n) alpha_n n^{-3/2} sum_x (grad_n T+_{c_n t} f)(x/n)
                                           (xi_x - rho)(xi_{x+1} - rho),

    per replica of a (R, n) block."""
    xi = np.atleast_2d(xi_block)
    n = params.n
    F = f.lattice_values(n, shift=frame_offset(params, t, mom))
    g = n * (np.roll(F, -1) - F)
    xic = xi - mom.rho
    pref = params.b**2 * params.theta_n * params.alpha_n / n**1.5
    return pref * ((xic * np.roll(xic, -1, axis=1)) @ g)


class Observer:
    """Base streaming observer for dynamics.run_ensemble."""

    def start(self, times, n_replicas, params):
        self.times = np.asarray(times)
        self.n_replicas = n_replicas
        self.params = params

    def observe(self, ti, t, xi_block, r0):  # pragma: no cover - interface
        raise NotImplementedError

    def finish(self):
        pass


class ModeRecorder(Observer):
    """Per-replica Y and V values on the listed modes at every snapshot."""

    def __init__(self, zs, mom: Moments, record_v: bool = True):
        self.zs = list(zs)
        self.mom = mom
        self.record_v = record_v

    def start(self, times, n_replicas, params):
        super().start(times, n_replicas, params)
        self.y = np.empty((len(times), n_replicas, len(self.zs)))
        self.v = np.empty_like(self.y) if self.record_v else None

    def observe(self, ti, t, xi_block, r0):
        rows = xi_block.shape[0]
        off = frame_offset(self.params, t, self.mom)
        self.y[ti, r0:r0 + rows] = batch_mode_values(xi_block - self.mom.rho, self.zs, shift=off)
        if self.record_v:
            eta = -np.log(xi_block) / self.params.b
            self.v[ti, r0:r0 + rows] = batch_mode_values(eta - self.mom.v, self.zs)


class PairFieldRecorder(Observer):
    """Z_t.(f1,f2) together with its exact generator compensator, per replica."""

    def __init__(self, f1: TestFunction, f2: TestFunction, mom: Moments):
        self.f1, self.f2, self.mom = f1, f2, mom

    def start(self, times, n_replicas, params):
        super().start(times, n_replicas, params)
        self.zf = np.empty((len(times), n_replicas))
        self.action = np.empty_like(self.zf)

    def observe(self, ti, t, xi_block, r0):
        rows = xi_block.shape[0]
        n = self.params.n
        rootn = math.sqrt(n)
        off = frame_offset(self.params, t, self.mom)
        F1 = self.f1.lattice_values(n, shift=off)
        F2 = self.f2.lattice_values(n)
        xic = xi_block - self.mom.rho
        etac = -np.log(xi_block) / self.params.b - self.mom.v
        self.zf[ti, r0:r0 + rows] = (xic @ F1 + etac @ F2) / rootn
        self.action[ti, r0:r0 + rows] = generator_action(
            xi_block, self.params, self.mom, self.f1, self.f2, t)

    def residuals(self) -> np.ndarray:
        """Martingale residual series N_t per replica, shape (T, R)."""
        dt = np.diff(self.times)
        incr = 0.5 * dt[:, None] * (self.action[1:] + self.action[:-1])
        comp = np.vstack([np.zeros((1, self.zf.shape[1])), np.cumsum(incr, axis=0)])
        return self.zf - self.zf[0] - comp


class QVRecorder(Observer):
    """Integrand of the predictable quadratic variation, per replica."""

    def __init__(self, f1: TestFunction, f2: TestFunction, mom: Moments):
        self.f1, self.f2, self.mom = f1, f2, mom

    def start(self, times, n_replicas, params):
        super().start(times, n_replicas, params)
        self.integrand = np.empty((len(times), n_replicas))

    def observe(self, ti, t, xi_block, r0):
        rows = xi_block.shape[0]
        n = self.params.n
        p = self.params
        F1 = self.f1.lattice_values(n, shift=frame_offset(p, t, self.mom))
        F2 = self.f2.lattice_values(n)
        g1 = n * (np.roll(F1, -1) - F1)
        g2 = n * (np.roll(F2, -1) - F2)
        dxi = np.roll(xi_block, -1, axis=1) - xi_block
        eta = -np.log(xi_block) / p.b
        deta = np.roll(eta, -1, axis=1) - eta
        w = p.gamma * p.theta_n / n**3
        self.integrand[ti, r0:r0 + rows] = w * (
            (dxi * dxi) @ (g1 * g1) + (deta * deta) @ (g2 * g2) + (dxi * deta) @ (2.0 * g1 * g2))

    def totals(self) -> np.ndarray:
        return np.trapezoid(self.integrand, self.times, axis=0)


class QuadraticTermRecorder(Observer):
    """Time integral of the centered quadratic term, per replica.

    A dense (per-step) accumulator: the integrand decorrelates on the
    exchange step scale, so it must be summed at every integrator step.
    """

    def __init__(self, f: TestFunction, mom: Moments):
        self.f, self.mom = f, mom

    def start(self, times, n_replicas, params):
        super().start(times, n_replicas, params)
        self._totals = np.zeros(n_replicas)

    def accumulate(self, t, dt, xi_block, r0):
        rows = xi_block.shape[0]
        self._totals[r0:r0 + rows] += dt * quadratic_term(
            xi_block, self.params, self.mom, self.f, t)

    def totals(self) -> np.ndarray:
        return self._totals


class BGRecorder(Observer):
    """Time integral of the second-order replacement functional, per replica:
    sum_x psi(x/n) { xibar_x xibar_{x+1} - (box average)^2 + tau^2/(eps n) },
    accumulated densely at every integrator step (fast integrand)."""

    def __init__(self, psi: TestFunction, eps: float, mom: Moments):
        self.psi, self.eps, self.mom = psi, eps, mom

    def start(self, times, n_replicas, params):
        super().start(times, n_replicas, params)
        n = params.n
        self.ell = int(math.floor(self.eps * n))
        if self.ell < 1:
            raise ValueError(f"eps*n = {self.eps * n:.3g} < 1")
        self.psi_vals = self.psi.lattice_values(n)
        self._totals = np.zeros(n_replicas)

    def _values(self, xi_block):
        xic = xi_block - self.mom.rho
        boxes = box_average_all(xic, self.ell)
        w = xic * np.roll(xic, -1, axis=1) - boxes * boxes \
            + self.mom.tau2 / (self.eps * self.params.n)
        return w @ self.psi_vals

    def accumulate(self, t, dt, xi_block, r0):
        rows = xi_block.shape[0]
        self._totals[r0:r0 + rows] += dt * self._values(xi_block)

    def totals(self) -> np.ndarray:
        return self._totals


class OneSiteMomentRecorder(Observer):
    """Per-replica spatial means of eta, eta^2, xi, xi^2 at every snapshot."""

    def start(self, times, n_replicas, params):
        super().start(times, n_replicas, params)
        self.stats = np.empty((len(times), n_replicas, 4))

    def observe(self, ti, t, xi_block, r0):
        rows = xi_block.shape[0]
        eta = -np.log(xi_block) / self.params.b
        s = self.stats[ti, r0:r0 + rows]
        s[:, 0] = eta.mean(axis=1)
        s[:, 1] = (eta * eta).mean(axis=1)
        s[:, 2] = xi_block.mean(axis=1)
        s[:, 3] = (xi_block * xi_block).mean(axis=1)


# ---------------------------------------------------------------------------
# spec-level operations on stored trajectories


def martingale_residual(traj: dynamics.Trajectory, params: ModelParams,
                        f1: TestFunction, f2: TestFunction) -> np.ndarray:
    """Martingale residual series N_t . (f1, f2) along one trajectory:
    field increment minus the trapezoid quadrature of the exact generator
    action at the snapshot times."""
    from .model import xi_of

    mom = moments(params)
    tvals = traj.times
    zf = np.empty(tvals.size)
    act = np.empty(tvals.size)
    for i, t in enumerate(tvals):
        xi = xi_of(traj.states[i], params.b)[None, :]
        n = params.n
        F1 = f1.lattice_values(n, shift=frame_offset(params, t, mom))
        F2 = f2.lattice_values(n)
        zf[i] = ((xi[0] - mom.rho) @ F1 + (traj.states[i] - mom.v) @ F2) / math.sqrt(n)
        act[i] = generator_action(xi, params, mom, f1, f2, t)[0]
    comp = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(tvals) * (act[1:] + act[:-1]))])
    return zf - zf[0] - comp


def bg_second_order_test(trajectories, params: ModelParams, psi: TestFunction,
                         eps: float, t: float) -> tuple[float, float, float]:
    """Second moment of the time-integrated replacement functional over an
    ensemble of trajectories, against the bound shape.

    Returns (lhs, rhs_shape, lhs_se) with
      lhs       = E[ ( int_0^t sum_x psi W_x ds )^2 ],
      rhs_shape = int_0^t |psi|_{2,n}^2 ds * ( eps + t/(eps^2 n) ).
    The caller checks lhs <= K * rhs_shape for one constant K across a grid.
    """
    from .model import xi_of

    mom = moments(params)
    n = params.n
    ell = int(math.floor(eps * n))
    if ell < 1:
        raise ValueError("eps*n < 1")
    psi_vals = psi.lattice_values(n)
    vals = []
    for traj in trajectories:
        mask = traj.times <= t + 1e-12
        times = traj.times[mask]
        integ = np.empty(times.size)
        for i, s in enumerate(times):
            xic = xi_of(traj.states[i], params.b)[None, :] - mom.rho
            box = box_average_all(xic, ell)
            w = xic * np.roll(xic, -1, axis=1) - box * box + mom.tau2 / (eps * n)
            integ[i] = (w @ psi_vals)[0]
        vals.append(np.trapezoid(integ, times))
    sq = np.asarray(vals) ** 2
    lhs = float(np.mean(sq))
    se = float(np.std(sq, ddof=1) / math.sqrt(len(sq))) if len(sq) > 1 else float("nan")
    psi_norm2 = float(np.mean(psi_vals**2))
    rhs_shape = t * psi_norm2 * (eps + t / (eps**2 * n))
    return lhs, rhs_shape, se


def fit_log_variance(ns, variances, var_se) -> ScalingFit:
    """WLS fit of log(variance) against log(n) with delta-method errors."""
    ns = np.asarray(ns, dtype=float)
    variances = np.asarray(variances, dtype=float)
    var_se = np.asarray(var_se, dtype=float)
    if ns.size < 3:
        raise ValueError("need at least 3 lattice sizes")
    if np.any(variances <= 0):
        raise ValueError("zero or negative variance: nothing to fit "
                         "(alpha = 0 produces an identically zero term)")
    xs = np.log(ns)
    ys = np.log(variances)
    y_se = var_se / variances
    w = 1.0 / y_se**2
    W = np.sum(w)
    xbar = np.sum(w * xs) / W
    ybar = np.sum(w * ys) / W
    sxx = np.sum(w * (xs - xbar) ** 2)
    slope = np.sum(w * (xs - xbar) * (ys - ybar)) / sxx
    intercept = ybar - slope * xbar
    slope_se = math.sqrt(1.0 / sxx)
    return ScalingFit(xs=xs, ys=ys, y_se=y_se, slope=float(slope),
                      slope_se=float(slope_se), intercept=float(intercept))


def variance_with_se(samples: np.ndarray) -> tuple[float, float]:
    """Mean-zero second moment and its standard error from the empirical
    fourth moment (no Gaussianity assumed)."""
    samples = np.asarray(samples, dtype=float)
    r = samples.size
    v = float(np.mean(samples**2))
    se = float(math.sqrt(max(np.mean(samples**4) - v * v, 0.0) / r))
    return v, se


def h_minus_one_scaling(params_list, f: TestFunction, t: float, n_replicas: int,
                        seed: int, spec=None) -> ScalingFit:
    """Ensemble variance of the time-integrated quadratic term across lattice
    sizes, fitted as log-variance vs log n.  The integral is accumulated at
    every integrator step."""
    if len(params_list) < 3:
        raise ValueError("need at least 3 lattice sizes")
    spec = spec or dynamics.IntegratorSpec()
    ns, vs, ses = [], [], []
    for params in params_list:
        if params.alpha == 0:
            raise ValueError("alpha = 0: quadratic term vanishes identically")
        mom = moments(params)
        rec = QuadraticTermRecorder(f, mom)
        dynamics.run_ensemble(params, spec, [0.0, t], n_replicas, seed, [],
                              step_observers=[rec])
        v, se = variance_with_se(rec.totals())
        ns.append(params.n)
        vs.append(v)
        ses.append(se)
    return fit_log_variance(ns, vs, ses)


# ---------------------------------------------------------------------------
# closed-form predictions


def integrated_shifted_gradient(f: TestFunction, c: float, t: float) -> TestFunction:
    """G = int_0^t grad T-_{cs} f ds, exactly, as a test function."""
    fhat = f.complex_coeffs()
    out: dict[int, float] = {}
    for z in range(1, fhat.size):
        if fhat[z] == 0:
            continue
        if c == 0.0:
            g = 2j * np.pi * z * t * fhat[z]
        else:
            g = fhat[z] * (1.0 - np.exp(-2j * np.pi * z * c * t)) / c
        out[z] = out.get(z, 0.0) + math.sqrt(2.0) * g.real
        out[-z] = out.get(-z, 0.0) + math.sqrt(2.0) * g.imag
    return TestFunction(out)


def qv_prediction(params: ModelParams, mom: Moments, f1: TestFunction,
                  f2: TestFunction, T: float, c: float) -> float:
    """Limit of the expected quadratic variation at horizon T:
    2 T gamma tau^2 |grad f1|^2 + 2 T gamma sigma^2 |grad f2|^2 plus the
    frame-dependent cross term 4 gamma delta int_0^T <grad T+_{cs} f1, grad f2>,
    which is 4 gamma delta c^{-1} <T+_{cT} f1 - f1, grad f2> for c != 0 and
    4 gamma delta T <grad f1, grad f2> in the c -> 0 limit."""
    g = params.gamma
    d1 = f1.derivative()
    d2 = f2.derivative()
    base = 2.0 * T * g * mom.tau2 * d1.l2_norm2() + 2.0 * T * g * mom.sigma2 * d2.l2_norm2()
    if c == 0.0:
        cross = 4.0 * g * mom.delta * T * d1.l2_inner(d2)
    else:
        cross = 4.0 * g * mom.delta / c * (f1.shifted(c * T) - f1).l2_inner(d2)
    return base + cross


def ou_two_time(A: np.ndarray, D: np.ndarray, z: int, lag: float) -> np.ndarray:
    """E[Z_t(h_z-type) Z_s(h_z-type)^T] = exp(-w A lag) D for the stationary
    generalized OU field, lag = t - s >= 0."""
    w = (2.0 * np.pi * z) ** 2
    return sla.expm(-w * np.atleast_2d(A) * lag) @ np.atleast_2d(D)


def transport_cov_prediction(mom: Moments, theta: float, c: float, t: float,
                             z: int) -> dict[str, float]:
    """Closed-form two-time covariances of the trivial-transport pair started
    from the product-measure field, restricted to the (h_z, h_{-z}) modes.

    ``theta`` is the coefficient of the tested-form equation
    V_t(f) = V_0(f) + theta int_0^t Y_0(grad T-_{cs} f) ds; testing the
    transport operator [[0,0],[theta_op grad T+, 0]] against f picks up the
    adjoint's minus sign, so theta = -theta_op (= +2 alpha b for this model).

    Keys: 'yy0' = E[Y_t(h_z) Y_0(h_z)], 'vy0' = E[V_t(h_z) Y_0(h_z)],
    'vy0_conj' = E[V_t(h_z) Y_0(h_{-z})], 'vv0' = E[V_t(h_z) V_0(h_z)],
    'vv0_conj' = E[V_t(h_z) V_0(h_{-z})], 'vvt' = E[V_t(h_z) V_t(h_z)].
    """
    hz = TestFunction.mode(z)
    hmz = TestFunction.mode(-z)
    G = integrated_shifted_gradient(hz, c, t)
    out = {
        "yy0": mom.tau2,
        "vy0": mom.delta + theta * mom.tau2 * G.l2_inner(hz),
        "vy0_conj": theta * mom.tau2 * G.l2_inner(hmz),
        "vv0": mom.sigma2 + theta * mom.delta * G.l2_inner(hz),
        "vv0_conj": theta * mom.delta * G.l2_inner(hmz),
        "vvt": mom.sigma2 + 2.0 * theta * mom.delta * G.l2_inner(hz)
               + theta**2 * mom.tau2 * G.l2_norm2(),
    }
    return out


def drifted_mode_covariances(p, Sigma0: np.ndarray, z: int, t: float):
    """Exact mode-z covariances of the drifted OU pair at time t started from
    a Gaussian field with mode covariance Sigma0 at t=0.

    Returns (equal_time, two_time) as complex 2x2 arrays in the (u1, u2)
    coordinates: equal_time = E[u_t u_t^H], two_time = E[u_t u_0^H].
    """
    from .spde import _drifted_system

    M, Q, omega = _drifted_system(p, z)
    Sigma_inf = sla.solve_continuous_lyapunov(M, -Q)
    E = sla.expm(M * t)
    eq_rot = E @ Sigma0.astype(complex) @ E.conj().T + (Sigma_inf - E @ Sigma_inf @ E.conj().T)
    two_rot = E @ Sigma0.astype(complex)
    ph = np.exp(-1j * omega * t)
    rot_back = np.diag([ph, 1.0])
    eq = rot_back @ eq_rot @ rot_back.conj().T
    two = rot_back @ two_rot  # u(0) phases are unity at t=0
    return eq, two


def covariance_vs_ou(y: np.ndarray, v: np.ndarray, times: np.ndarray, zs,
                     p, mom: Moments, time_pairs, z_limit: float = 3.0):
    """Compare empirical two-time covariances of recorded (Y, V) mode values
    against the stationary OU prediction <T_{t-s} f, D g>_0.

    y, v have shape (T, R, len(zs)); time_pairs is a list of (i_later, i_earlier)
    index pairs into times.  Returns a list of CheckReport.
    """
    D = sla.solve_continuous_lyapunov(np.atleast_2d(np.asarray(p.A, dtype=float)),
                                      2.0 * np.atleast_2d(np.asarray(p.C, dtype=float)))
    reports = []
    comps = {"Y": y, "V": v}
    names = ["Y", "V"]
    for (it, is_) in time_pairs:
        lag = float(times[it] - times[is_])
        for j, z in enumerate(zs):
            pred = ou_two_time(p.A, D, z, lag)
            for ia, na in enumerate(names):
                for ib, nb in enumerate(names):
                    prod = comps[na][it, :, j] * comps[nb][is_, :, j]
                    emp = float(np.mean(prod))
                    se = float(np.std(prod, ddof=1) / math.sqrt(prod.size))
                    reports.append(CheckReport.from_se(
                        f"E[{na}_t(h_{z}) {nb}_s(h_{z})], lag={lag:.4g}",
                        emp, float(pred[ia, ib]), se, z_limit))
    return reports
