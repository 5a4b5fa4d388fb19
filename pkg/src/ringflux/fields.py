"""Fluctuation fields, the trigonometric test-function basis, negative-Sobolev
norms, and mesoscopic box averages.

Test functions are finite expansions in the orthonormal torus basis

    h_z(x) = sqrt(2) cos(2 pi z x)   z > 0
           = sqrt(2) sin(2 pi z x)   z < 0
           = 1                       z = 0

so the moving-frame shift acts exactly as a rotation in each (h_z, h_{-z})
pair and no interpolation is ever needed.  Field evaluations against the
whole basis reduce to one real FFT of the centered configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .equilibrium import Moments, moments
from .model import ModelParams, eta_of, xi_of

__all__ = [
    "TestFunction",
    "FieldSample",
    "frame_velocity",
    "frame_offset",
    "field_y",
    "field_v",
    "batch_mode_values",
    "h_minus_k_norm",
    "sobolev_weight",
    "box_average",
    "box_average_all",
]

SQRT2 = math.sqrt(2.0)


def basis_value(z: int, x):
    """h_z evaluated at x (vectorized)."""
    x = np.asarray(x, dtype=np.float64)
    if z > 0:
        return SQRT2 * np.cos(2.0 * np.pi * z * x)
    if z < 0:
        return SQRT2 * np.sin(2.0 * np.pi * z * x)
    return np.ones_like(x)


class TestFunction:
    """Finite expansion sum_z coeffs[z] * h_z."""

    __slots__ = ("coeffs",)
    __test__ = False  # keep pytest from collecting the class by its name

    def __init__(self, coeffs: Mapping[int, float] | None = None):
        self.coeffs = {int(z): float(c) for z, c in (coeffs or {}).items() if c != 0.0}

    @classmethod
    def mode(cls, z: int, amplitude: float = 1.0) -> "TestFunction":
        return cls({z: amplitude})

    @classmethod
    def zero(cls) -> "TestFunction":
        return cls({})

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        for z, c in self.coeffs.items():
            out += c * basis_value(z, x)
        return out if out.ndim else float(out)

    def __add__(self, other: "TestFunction") -> "TestFunction":
        out = dict(self.coeffs)
        for z, c in other.coeffs.items():
            out[z] = out.get(z, 0.0) + c
        return TestFunction(out)

    def __sub__(self, other: "TestFunction") -> "TestFunction":
        return self + (other * -1.0)

    def __mul__(self, scalar: float) -> "TestFunction":
        return TestFunction({z: c * scalar for z, c in self.coeffs.items()})

    __rmul__ = __mul__

    def shifted(self, c: float) -> "TestFunction":
        """Exact moving-frame shift: (T+_c f)(x) = f(x + c)."""
        out: dict[int, float] = {}
        for z, coef in self.coeffs.items():
            if z == 0:
                out[0] = out.get(0, 0.0) + coef
                continue
            m = abs(z)
            phi = 2.0 * np.pi * m * c
            cphi, sphi = math.cos(phi), math.sin(phi)
            if z > 0:
                out[m] = out.get(m, 0.0) + coef * cphi
                out[-m] = out.get(-m, 0.0) + coef * sphi
            else:
                out[-m] = out.get(-m, 0.0) + coef * cphi
                out[m] = out.get(m, 0.0) - coef * sphi
        return TestFunction(out)

    def derivative(self) -> "TestFunction":
        """Exact gradient: d/dx h_z = 2 pi z h_{-z}."""
        return TestFunction({-z: 2.0 * np.pi * z * c for z, c in self.coeffs.items() if z != 0})

    def lattice_values(self, n: int, shift: float = 0.0) -> np.ndarray:
        """Values of the (optionally shifted) function at x/n, x = 0..n-1."""
        grid = np.arange(n) / n + shift
        out = np.zeros(n)
        for z, c in self.coeffs.items():
            out += c * basis_value(z, grid)
        return out

    def complex_coeffs(self, z_max: int | None = None) -> np.ndarray:
        """Exponential-basis coefficients fhat_z, z = 0..z_max, where
        f = sum_z fhat_z e^{2 pi i z x} and fhat_{-z} = conj(fhat_z)."""
        zm = z_max if z_max is not None else self.max_mode
        out = np.zeros(zm + 1, dtype=complex)
        for z, c in self.coeffs.items():
            if z == 0:
                out[0] += c
            elif z > 0:
                out[z] += c / SQRT2
            else:
                out[-z] += 1j * c / SQRT2
        return out

    def l2_inner(self, other: "TestFunction") -> float:
        return sum(c * other.coeffs.get(z, 0.0) for z, c in self.coeffs.items())

    def l2_norm2(self) -> float:
        return sum(c * c for c in self.coeffs.values())

    @property
    def max_mode(self) -> int:
        return max((abs(z) for z in self.coeffs), default=0)

    def __repr__(self):
        return f"TestFunction({self.coeffs})"


@dataclass
class FieldSample:
    """Field evaluations at one time: maps z -> Y value and z -> V value."""

    t: float
    y: dict[int, float]
    v: dict[int, float]
    frame_offset: float


def frame_velocity(params: ModelParams, mom: Moments | None = None) -> tuple[float, float]:
    """Moving-frame velocities (c_n, c): c = 2 b^2 rho alpha and
    c_n = c * n^(a - kappa - 1)."""
    rho = (mom or moments(params)).rho
    c = 2.0 * params.b**2 * rho * params.alpha
    cn = c * float(params.n) ** (params.a - params.kappa - 1.0)
    return cn, c


def frame_offset(params: ModelParams, t: float, mom: Moments | None = None) -> float:
    """Frame displacement c_n * t reduced mod 1."""
    cn, _ = frame_velocity(params, mom)
    return math.fmod(cn * t, 1.0)


def field_y(config: np.ndarray, t: float, f: TestFunction, params: ModelParams,
            mom: Moments | None = None) -> float:
    """Moving-frame fluctuation field of xi:
    n^{-1/2} sum_x (T+_{c_n t} f)(x/n) (xi_x - rho)."""
    mom = mom or moments(params)
    xi = xi_of(np.asarray(config, dtype=np.float64), params.b)
    vals = f.lattice_values(params.n, shift=frame_offset(params, t, mom))
    return float(vals @ (xi - mom.rho) / math.sqrt(params.n))


def field_v(config: np.ndarray, t: float, f: TestFunction, params: ModelParams,
            mom: Moments | None = None) -> float:
    """Static fluctuation field of eta: n^{-1/2} sum_x f(x/n) (eta_x - v)."""
    mom = mom or moments(params)
    eta = np.asarray(config, dtype=np.float64)
    vals = f.lattice_values(params.n)
    return float(vals @ (eta - mom.v) / math.sqrt(params.n))


def batch_mode_values(centered: np.ndarray, zs, shift: float = 0.0) -> np.ndarray:
    """Fields of a centered (R, n) block against h_z for every z in zs,
    with the test functions shifted by ``shift``; returns (R, len(zs)).

    Uses one rFFT: the field value on h_z is sqrt(2/n) Re(u_m e^{-i phi})
    for z = m > 0 and sqrt(2/n) Im(u_m e^{-i phi}) for z = -m, with
    u = rfft(centered) and phi = 2 pi m shift.
    """
    centered = np.atleast_2d(centered)
    nrep, n = centered.shape
    zs = list(zs)
    u = np.fft.rfft(centered, axis=1)
    out = np.empty((nrep, len(zs)))
    root = math.sqrt(2.0 / n)
    for j, z in enumerate(zs):
        m = abs(z)
        if m >= u.shape[1] or (n % 2 == 0 and m == n // 2):
            raise ValueError(f"mode {z} not representable on n={n} without aliasing")
        if z == 0:
            out[:, j] = centered.sum(axis=1) / math.sqrt(n)
            continue
        rot = u[:, m] * np.exp(-2j * np.pi * m * shift)
        out[:, j] = root * (rot.real if z > 0 else rot.imag)
    return out


def sample_fields(config: np.ndarray, t: float, params: ModelParams, zs,
                  mom: Moments | None = None) -> FieldSample:
    """Y and V values on the listed modes at time t, as a FieldSample."""
    mom = mom or moments(params)
    xi = xi_of(np.asarray(config, dtype=np.float64), params.b)
    off = frame_offset(params, t, mom)
    yv = batch_mode_values(xi - mom.rho, zs, shift=off)[0]
    vv = batch_mode_values(np.asarray(config) - mom.v, zs)[0]
    return FieldSample(t=t, y=dict(zip(zs, yv)), v=dict(zip(zs, vv)), frame_offset=off)


def sobolev_weight(z: int, k: int) -> float:
    """gamma_z^{-k} with gamma_z = 1 + 4 pi^2 z^2."""
    return float((1.0 + 4.0 * np.pi**2 * z * z) ** (-k))


def h_minus_k_norm(values: Mapping[int, tuple[float, float]], k: int) -> float:
    """Squared H_{-k} x H_{-k} norm of a two-component field from its mode
    values: sum_z (v1_z^2 + v2_z^2) gamma_z^{-k} over the supplied modes."""
    total = 0.0
    for z, (v1, v2) in values.items():
        total += (v1 * v1 + v2 * v2) * sobolev_weight(z, k)
    return total


def box_average(config: np.ndarray, x: int, eps: float, params: ModelParams,
                mom: Moments | None = None) -> float:
    """Mean of xi - rho over the floor(eps*n) sites to the right of x."""
    mom = mom or moments(params)
    n = params.n
    ell = int(math.floor(eps * n))
    if ell < 1:
        raise ValueError(f"eps*n = {eps * n:.3g} < 1: box is empty")
    xi = xi_of(np.asarray(config, dtype=np.float64), params.b)
    idx = (np.arange(x + 1, x + ell + 1)) % n
    return float(np.mean(xi[idx] - mom.rho))


def box_average_all(centered: np.ndarray, ell: int) -> np.ndarray:
    """Box averages over windows [x+1, x+ell] for every x; centered is (R, n).

    Returns (R, n).  Uses a cumulative sum over a wrapped extension.
    """
    if ell < 1:
        raise ValueError("window must contain at least one site")
    arr = np.atleast_2d(centered)
    nrep, n = arr.shape
    ext = np.concatenate([arr, arr[:, :ell]], axis=1)
    cs = np.zeros((nrep, n + ell + 1))
    np.cumsum(ext, axis=1, out=cs[:, 1:])
    # window for x covers ext positions x+1 .. x+ell
    return (cs[:, ell + 1 : n + ell + 1] - cs[:, 1 : n + 1]) / ell
