"""Reference solvers for the limiting equations, in spectral (Fourier mode)
coordinates on the torus.

All four limit objects are handled:

* generalized d-dimensional Ornstein-Uhlenbeck  dZ = A Lap Z dt + sqrt(2C) grad dB,
  with stationary covariance D solving A D + D A^T = 2 C (per-mode noise rate
  2 w C, w = (2 pi z)^2);
* the two-component drifted OU with shift-coupled noise operator
  (quadratic-variation convention without the factor 2: per-mode noise rate
  w C_t), solved exactly in law by rotating the first component into the
  frame where the system has constant coefficients;
* the trivial transport pair (first component frozen, second driven by its
  time-integrated shifted gradient), in closed form;
* the one-dimensional stochastic Burgers equation, by Strang splitting of an
  exact spectral OU update with the three-point flux
  (Y_j^2 + Y_j Y_{j+1} + Y_{j+1}^2)/3, whose lattice divergence leaves the
  white-noise product measure invariant and conserves sum Y and sum Y^2
  pathwise.

States hold complex coefficients for modes z = 0..z_max; the represented
field is real (mode -z is the conjugate of mode +z).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .fields import TestFunction

__all__ = [
    "SpectralState",
    "OUParams",
    "DriftedOUParams",
    "lyapunov_solve",
    "gaussian_white_state",
    "ou_sample_stationary",
    "ou_step",
    "drifted_ou_step",
    "transport_solve",
    "sbe_step",
    "sbe_energy_estimate",
]

SBE_CFL = 1.0  # dt * A * z_max^2 <= SBE_CFL


def _as_matrix(m) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    if m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    return m


def _psd_sqrt(S: np.ndarray) -> np.ndarray:
    """Square root of a (possibly complex Hermitian) PSD matrix via eigh,
    clipping rounding-level negative eigenvalues."""
    vals, vecs = np.linalg.eigh(S)
    vals = np.clip(vals, 0.0, None)
    return vecs @ (np.sqrt(vals)[:, None] * vecs.conj().T)


@dataclass
class SpectralState:
    """Complex mode coefficients, coeffs[i, z] for component i and z >= 0."""

    coeffs: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=complex))
        self.coeffs[:, 0] = self.coeffs[:, 0].real  # reality of the zero mode

    @property
    def comps(self) -> int:
        return self.coeffs.shape[0]

    @property
    def z_max(self) -> int:
        return self.coeffs.shape[1] - 1

    def copy(self) -> "SpectralState":
        return SpectralState(self.coeffs.copy(), self.t)

    def value(self, comp: int, z: int) -> float:
        """Field tested against h_z: sqrt(2) Re u_z (z>0), sqrt(2) Im u_z (z<0),
        Re u_0 (z=0)."""
        m = abs(z)
        u = self.coeffs[comp, m]
        if z > 0:
            return math.sqrt(2.0) * u.real
        if z < 0:
            return math.sqrt(2.0) * u.imag
        return u.real

    def test(self, comp: int, f: TestFunction) -> float:
        return sum(c * self.value(comp, z) for z, c in f.coeffs.items())


@dataclass(frozen=True)
class OUParams:
    """Diffusion matrix A and noise matrix C of the generalized OU equation."""

    A: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _as_matrix(self.A))
        object.__setattr__(self, "C", _as_matrix(self.C))
        if self.A.shape != self.C.shape:
            raise ValueError("A and C must have equal shapes")
        for name, m in (("A", self.A), ("C", self.C)):
            if not np.allclose(m, m.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
        if np.any(np.linalg.eigvalsh(self.C) < -1e-12):
            raise ValueError("C must be nonnegative")

    @property
    def dim(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class DriftedOUParams:
    """Parameters of the two-component drifted OU system.

    lam, mu   : componentwise diffusivities (> 0)
    theta     : strength of the gradient coupling of component 2 to component 1
    c         : frame velocity entering the shift operators
    a_, b_, d_: noise quadratic form entries; a_, d_ > 0 and a_ d_ - b_^2 > 0
    """

    lam: float
    mu: float
    theta: float
    c: float
    a_: float
    b_: float
    d_: float

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise ValueError("lam and mu must be positive")
        if not (self.a_ > 0 and self.d_ > 0 and self.a_ * self.d_ - self.b_**2 > 0):
            raise ValueError("noise form must be positive definite")

    def noise_matrix(self) -> np.ndarray:
        return np.array([[self.a_, self.b_], [self.b_, self.d_]])


def lyapunov_solve(A, C) -> np.ndarray:
    """Symmetric D with A D + D A^T = 2 C; raises if A is not positive definite
    or the residual exceeds 1e-12 relative to the data."""
    A, C = _as_matrix(A), _as_matrix(C)
    if np.any(np.linalg.eigvalsh((A + A.T) / 2) <= 0):
        raise np.linalg.LinAlgError("A must be positive definite")
    D = sla.solve_continuous_lyapunov(A, 2.0 * C)
    D = (D + D.T) / 2
    resid = np.linalg.norm(A @ D + D @ A.T - 2.0 * C)
    scale = max(1.0, np.linalg.norm(C))
    if resid > 1e-12 * scale:
        raise np.linalg.LinAlgError(f"Lyapunov residual too large: {resid:.3e}")
    return D


def gaussian_white_state(D, z_max: int, rng: np.random.Generator) -> SpectralState:
    """Mean-zero Gaussian field with E[Z(h_z) Z(h_w)^T] = D delta_{zw}:
    independent modes, Re and Im parts of each z >= 1 with covariance D/2."""
    D = _as_matrix(D)
    d = D.shape[0]
    L = _psd_sqrt(D)
    g = rng.standard_normal((z_max + 1, d, 2))
    coeffs = np.empty((d, z_max + 1), dtype=complex)
    coeffs[:, 0] = L @ g[0, :, 0]
    for z in range(1, z_max + 1):
        coeffs[:, z] = (L @ g[z, :, 0] + 1j * (L @ g[z, :, 1])) / math.sqrt(2.0)
    return SpectralState(coeffs)


def ou_sample_stationary(p: OUParams, z_max: int, rng: np.random.Generator) -> SpectralState:
    """Draw from the stationary law of the OU equation (covariance from the
    Lyapunov equation)."""
    if np.allclose(p.C, 0.0):
        return SpectralState(np.zeros((p.dim, z_max + 1), dtype=complex))
    return gaussian_white_state(lyapunov_solve(p.A, p.C), z_max, rng)


@functools.lru_cache(maxsize=64)
def _ou_propagators_cached(key, dt: float, z_max: int):
    """Per-mode decay matrices E_z = exp(-w_z A dt) and innovation square
    roots L_z with L L^T = D - E_z D E_z^T, stacked as (z_max, d, d)."""
    A, D = key.A, key.D
    vals, Q = np.linalg.eigh(A)
    d = A.shape[0]
    Es = np.empty((z_max, d, d))
    Ls = np.empty((z_max, d, d))
    for z in range(1, z_max + 1):
        w = (2.0 * np.pi * z) ** 2
        E = Q @ np.diag(np.exp(-w * vals * dt)) @ Q.T
        Es[z - 1] = E
        Ls[z - 1] = _psd_sqrt(D - E @ D @ E.T)
    return Es, Ls


class _MatKey:
    """Hashable wrapper so propagators can be cached per (A, D)."""

    __slots__ = ("A", "D", "_h")

    def __init__(self, A, D):
        self.A, self.D = A, D
        self._h = hash((A.tobytes(), D.tobytes(), A.shape))

    def __hash__(self):
        return self._h

    def __eq__(self, other):
        return np.array_equal(self.A, other.A) and np.array_equal(self.D, other.D)


def _ou_linear_update(coeffs: np.ndarray, A: np.ndarray, D: np.ndarray,
                      dt: float, rng: np.random.Generator) -> None:
    """Exact-in-law OU update of all modes in place.  Consumes one
    standard_normal((z_max, d, 2)) block regardless of dimension."""
    d, zdim = coeffs.shape
    z_max = zdim - 1
    g = rng.standard_normal((z_max, d, 2))
    if d == 1:
        w = (2.0 * np.pi * np.arange(1, z_max + 1)) ** 2
        E = np.exp(-w * A[0, 0] * dt)
        L = np.sqrt(D[0, 0] * (1.0 - E * E))
        zeta = L * (g[:, 0, 0] + 1j * g[:, 0, 1]) / math.sqrt(2.0)
        coeffs[0, 1:] = E * coeffs[0, 1:] + zeta
        return
    Es, Ls = _ou_propagators_cached(_MatKey(A.copy(), D.copy()), dt, z_max)
    for z in range(1, z_max + 1):
        zeta = (Ls[z - 1] @ g[z - 1, :, 0] + 1j * (Ls[z - 1] @ g[z - 1, :, 1])) / math.sqrt(2.0)
        coeffs[:, z] = Es[z - 1] @ coeffs[:, z] + zeta


def ou_step(state: SpectralState, p: OUParams, dt: float,
            rng: np.random.Generator) -> SpectralState:
    """Advance the OU field by dt, exactly in law per mode (mean decay
    exp(-w A dt), innovation covariance D - E D E^T); preserves stationarity
    for any dt.  Mode 0 is frozen."""
    if state.comps != p.dim:
        raise ValueError("state/parameter dimension mismatch")
    out = state.copy()
    if dt == 0.0:
        return out
    D = lyapunov_solve(p.A, p.C)
    _ou_linear_update(out.coeffs, p.A, D, dt, rng)
    out.t = state.t + dt
    return out


def _drifted_system(p: DriftedOUParams, z: int):
    """Constant-coefficient form of mode z in the rotating frame
    p1 = e^{i omega t} u1: drift M, noise rate Q = w * noise_matrix."""
    w = (2.0 * np.pi * z) ** 2
    omega = 2.0 * np.pi * z * p.c
    M = np.array([[1j * omega - p.lam * w, 0.0],
                  [1j * 2.0 * np.pi * z * p.theta, -p.mu * w]], dtype=complex)
    Q = w * p.noise_matrix().astype(complex)
    return M, Q, omega


def drifted_ou_step(state: SpectralState, p: DriftedOUParams, dt: float,
                    rng: np.random.Generator) -> SpectralState:
    """Advance the drifted OU pair by dt, exactly in law.

    Rotating the first component by e^{i 2 pi z c t} turns the mode system
    into a constant-coefficient complex OU (the shift phases in both the
    drift and the noise cross-correlation cancel), which is then updated by
    its exact Gaussian transition.
    """
    if state.comps != 2:
        raise ValueError("drifted OU state must have two components")
    out = state.copy()
    if dt == 0.0:
        return out
    t0 = state.t
    g = rng.standard_normal((state.z_max, 2, 2))
    for z in range(1, state.z_max + 1):
        M, Q, omega = _drifted_system(p, z)
        Sigma = sla.solve_continuous_lyapunov(M, -Q)
        E = sla.expm(M * dt)
        S = Sigma - E @ Sigma @ E.conj().T
        L = _psd_sqrt(S)
        x = np.array([np.exp(1j * omega * t0) * out.coeffs[0, z], out.coeffs[1, z]])
        zeta = (L @ g[z - 1, :, 0] + 1j * (L @ g[z - 1, :, 1])) / math.sqrt(2.0)
        x = E @ x + zeta
        out.coeffs[0, z] = np.exp(-1j * omega * (t0 + dt)) * x[0]
        out.coeffs[1, z] = x[1]
    out.t = t0 + dt
    return out


def transport_solve(initial: SpectralState, theta: float, c: float, t: float,
                    f: TestFunction) -> tuple[float, float]:
    """Closed-form solution of the trivial transport pair at time t, tested
    against f: the first component is frozen and

        Z2_t(f) = Z2_0(f) + theta * int_0^t Z1_0(grad T-_{cs} f) ds,

    where the s-integral is (1 - e^{i 2 pi z c t})/c per mode (t at c = 0)."""
    if initial.comps != 2:
        raise ValueError("transport state must have two components")
    z1 = initial.test(0, f)
    z2 = initial.test(1, f)
    fhat = f.complex_coeffs(initial.z_max)
    term = 0.0
    for z in range(1, min(initial.z_max, f.max_mode) + 1):
        if fhat[z] == 0:
            continue
        if c == 0.0:
            factor = -2j * np.pi * z * t
        else:
            factor = (1.0 - np.exp(2j * np.pi * z * c * t)) / c
        term += 2.0 * (initial.coeffs[0, z] * np.conj(fhat[z]) * factor).real
    return z1, z2 + theta * term


def _sbe_grid(z_max: int) -> int:
    return 2 * z_max + 1


def _to_physical(coeffs_row: np.ndarray, npts: int) -> np.ndarray:
    return np.fft.irfft(coeffs_row * npts, n=npts)


def _to_spectral(y: np.ndarray) -> np.ndarray:
    return np.fft.rfft(y) / y.size


def _sbe_nonlinear_kick(y: np.ndarray, B: float, tau: float, substeps: int = 1) -> None:
    """RK4 for dY_j = B N (G_j - G_{j-1}), the three-point flux
    G_j = (Y_j^2 + Y_j Y_{j+1} + Y_{j+1}^2)/3 on the bond (j, j+1)."""
    npts = y.size

    def rhs(u):
        up = np.roll(u, -1)
        g = (u * u + u * up + up * up) / 3.0
        return B * npts * (g - np.roll(g, 1))

    h = tau / substeps
    for _ in range(substeps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def sbe_step(state: SpectralState, A: float, B: float, C: float, dt: float,
             rng: np.random.Generator) -> SpectralState:
    """One Strang step of the stochastic Burgers solver: half nonlinear kick,
    exact spectral OU update of the linear/noise part, half kick.

    With B = 0 the kicks vanish and the step consumes the same draws as
    ou_step with (A, C), so paths coincide exactly.  Rejects time steps
    violating dt * A * z_max^2 <= SBE_CFL.
    """
    if state.comps != 1:
        raise ValueError("Burgers state must have a single component")
    if not (A > 0 and C > 0):
        if A == 0.0 and C == 0.0:
            out = state.copy()
            if B != 0.0:
                npts = _sbe_grid(state.z_max)
                y = _to_physical(out.coeffs[0], npts)
                _sbe_nonlinear_kick(y, B, dt)
                out.coeffs = np.atleast_2d(_to_spectral(y))
            out.t = state.t + dt
            return out
        raise ValueError("need A > 0, C > 0 (or A = C = 0 for the inviscid test)")
    if dt * A * state.z_max**2 > SBE_CFL * (1.0 + 1e-9):
        raise ValueError(
            f"CFL violation: dt={dt:.3g} exceeds {SBE_CFL / (A * state.z_max**2):.3g} "
            f"for A={A}, z_max={state.z_max}"
        )
    out = state.copy()
    npts = _sbe_grid(state.z_max)
    if B != 0.0:
        y = _to_physical(out.coeffs[0], npts)
        _sbe_nonlinear_kick(y, B, 0.5 * dt)
        out.coeffs = np.atleast_2d(_to_spectral(y))
    _ou_linear_update(out.coeffs, np.array([[A]]), np.array([[C / A]]), dt, rng)
    if B != 0.0:
        y = _to_physical(out.coeffs[0], npts)
        _sbe_nonlinear_kick(y, B, 0.5 * dt)
        out.coeffs = np.atleast_2d(_to_spectral(y))
    out.t = state.t + dt
    return out


def sbe_batch_step(coeffs: np.ndarray, A: float, B: float, C: float, dt: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Vectorized Strang step for a (paths, z_max+1) batch of independent
    Burgers fields; same scheme as sbe_step, one RNG block per step."""
    paths, zdim = coeffs.shape
    z_max = zdim - 1
    if dt * A * z_max**2 > SBE_CFL * (1.0 + 1e-9):
        raise ValueError("CFL violation in batch step")
    npts = _sbe_grid(z_max)

    def kick(c):
        y = np.fft.irfft(c * npts, n=npts, axis=1)
        h = 0.5 * dt
        for _ in range(1):
            yp = np.roll(y, -1, axis=1)
            g = (y * y + y * yp + yp * yp) / 3.0
            k1 = B * npts * (g - np.roll(g, 1, axis=1))
            y2 = y + 0.5 * h * k1
            yp = np.roll(y2, -1, axis=1)
            g = (y2 * y2 + y2 * yp + yp * yp) / 3.0
            k2 = B * npts * (g - np.roll(g, 1, axis=1))
            y3 = y + 0.5 * h * k2
            yp = np.roll(y3, -1, axis=1)
            g = (y3 * y3 + y3 * yp + yp * yp) / 3.0
            k3 = B * npts * (g - np.roll(g, 1, axis=1))
            y4 = y + h * k3
            yp = np.roll(y4, -1, axis=1)
            g = (y4 * y4 + y4 * yp + yp * yp) / 3.0
            k4 = B * npts * (g - np.roll(g, 1, axis=1))
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return np.fft.rfft(y, axis=1) / npts

    if B != 0.0:
        coeffs = kick(coeffs)
    w = (2.0 * np.pi * np.arange(1, z_max + 1)) ** 2
    E = np.exp(-w * A * dt)
    L = np.sqrt((C / A) * (1.0 - E * E))
    g = rng.standard_normal((paths, z_max, 2))
    zeta = L * (g[:, :, 0] + 1j * g[:, :, 1]) / math.sqrt(2.0)
    coeffs = coeffs.copy() if B == 0.0 else coeffs
    coeffs[:, 1:] = E * coeffs[:, 1:] + zeta
    if B != 0.0:
        coeffs = kick(coeffs)
    return coeffs


def quadratic_functional_batch(coeffs: np.ndarray, eps: float,
                               gradf_vals: np.ndarray) -> np.ndarray:
    """Batched version of the mollified quadratic functional: coeffs is
    (paths, z_max+1); gradf_vals are the gradient's values on the matching
    fine grid; returns (paths,)."""
    z = np.arange(coeffs.shape[1])
    m = np.ones(coeffs.shape[1], dtype=complex)
    nz = z > 0
    ph = 2j * np.pi * z[nz] * eps
    m[nz] = (np.exp(ph) - 1.0) / ph
    g = coeffs * m
    npts = gradf_vals.size
    phys = np.fft.irfft(g * npts, n=npts, axis=1)
    return np.mean(phys * phys * gradf_vals, axis=1)


def _box_mollified(coeffs_row: np.ndarray, eps: float) -> np.ndarray:
    """Mode multipliers of the right box average: u_z -> u_z
    (e^{i 2 pi z eps} - 1)/(i 2 pi z eps)."""
    z = np.arange(coeffs_row.size)
    m = np.ones(coeffs_row.size, dtype=complex)
    nz = z > 0
    ph = 2j * np.pi * z[nz] * eps
    m[nz] = (np.exp(ph) - 1.0) / ph
    return coeffs_row * m


def _quadratic_functional(coeffs_row: np.ndarray, eps: float, gradf: TestFunction) -> float:
    """integral over the torus of (box-averaged field)^2 * gradf."""
    g = _box_mollified(coeffs_row, eps)
    z_max = coeffs_row.size - 1
    npts = 4 * (z_max + max(1, gradf.max_mode)) + 1
    phys = np.fft.irfft(g * npts, n=npts)
    grid = np.arange(npts) / npts
    return float(np.mean(phys * phys * gradf(grid)))


def sbe_energy_estimate(times: np.ndarray, coeff_path: np.ndarray,
                        f: TestFunction, eps1: float, eps2: float) -> float:
    """Squared difference of the eps1- and eps2-mollified quadratic
    functionals along one stored path:

        ( Q^{eps1}_{s,t}(f) - Q^{eps2}_{s,t}(f) )^2,

    where Q^{eps}_{s,t}(f) = int_s^t int (Y_r(box_eps(u)))^2 grad f(u) du dr
    is integrated over the snapshot grid by the trapezoid rule.
    Identical eps arguments give exactly zero."""
    times = np.asarray(times, dtype=np.float64)
    if times.size < 2:
        raise ValueError("path too short: need at least two snapshots")
    if eps1 == eps2:
        return 0.0
    gradf = f.derivative()
    q1 = np.array([_quadratic_functional(c, eps1, gradf) for c in coeff_path])
    q2 = np.array([_quadratic_functional(c, eps2, gradf) for c in coeff_path])
    diff = np.trapezoid(q1 - q2, times)
    return float(diff * diff)
