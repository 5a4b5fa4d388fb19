"""Microscopic model on the discrete ring: potential, conserved quantities,
drift field of the Hamiltonian part, and per-bond currents.

The state is a configuration ``eta`` of n reals on the periodic lattice
{0, ..., n-1}.  The interaction potential is exponential,

    V_b(u) = exp(-b u) - 1 + b u >= 0,

and the derived variable ``xi = exp(-b eta)`` is what the asymmetric part
of the dynamics actually transports.  Everything here is a pure function
of immutable inputs and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModelParams",
    "validate_configuration",
    "potential",
    "potential_prime",
    "xi_of",
    "eta_of",
    "conserved",
    "drift_field",
    "currents",
]


@dataclass(frozen=True)
class ModelParams:
    """Scalar parameters of the microscopic model and its scaling regime.

    b      : stiffness of the exponential potential, b > 0
    gamma  : exchange-noise intensity, gamma >= 0 (0 = static noise, used by
             the degenerate-limit tests; the model proper has gamma > 0)
    alpha  : asymmetry amplitude (may be 0 or negative)
    kappa  : asymmetry exponent, alpha_n = alpha * n**(-kappa), kappa >= 0
    a      : time-scale exponent in (0, 2]; trajectories run at time t * n**a
    n      : lattice size, n >= 2
    beta   : rate parameter of the xi marginal (Gamma law), beta > 0
    lam    : shape shift of the xi marginal (shape = lam + 1), lam > -1
    """

    b: float = 1.0
    gamma: float = 1.0
    alpha: float = 0.0
    kappa: float = 0.0
    a: float = 2.0
    n: int = 2
    beta: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"b must be > 0, got {self.b}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if not 0 < self.a <= 2:
            raise ValueError(f"a must lie in (0, 2], got {self.a}")
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 2):
            raise ValueError(f"n must be an integer >= 2, got {self.n}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not self.lam > -1:
            raise ValueError(f"lam must be > -1, got {self.lam}")

    @property
    def alpha_n(self) -> float:
        """Size-dependent asymmetry amplitude alpha * n**(-kappa)."""
        return self.alpha * float(self.n) ** (-self.kappa)

    @property
    def theta_n(self) -> float:
        """Time acceleration factor n**a."""
        return float(self.n) ** self.a

    @property
    def drift_rate(self) -> float:
        """Prefactor alpha_n * theta(n) of the drift ODE in macroscopic time."""
        return self.alpha_n * self.theta_n

    @property
    def swap_rate(self) -> float:
        """Per-bond exchange rate gamma * theta(n) in macroscopic time."""
        return self.gamma * self.theta_n


def validate_configuration(eta: np.ndarray, params: ModelParams) -> np.ndarray:
    """Check that ``eta`` is a valid configuration for ``params`` and return it
    as a float64 array."""
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape != (params.n,):
        raise ValueError(f"configuration must have shape ({params.n},), got {eta.shape}")
    if not np.all(np.isfinite(eta)):
        raise ValueError("configuration contains non-finite entries")
    return eta


def potential(b: float, u):
    """Interaction potential V_b(u) = exp(-b u) - 1 + b u.

    Nonnegative with a unique zero at u = 0.  Uses expm1 so the value is
    accurate near the minimum.
    """
    u = np.asarray(u, dtype=np.float64)
    out = np.expm1(-b * u) + b * u
    return out if out.ndim else float(out)


def potential_prime(b: float, u):
    """Derivative V_b'(u) = b (1 - exp(-b u))."""
    u = np.asarray(u, dtype=np.float64)
    out = -b * np.expm1(-b * u)
    return out if out.ndim else float(out)


def xi_of(eta: np.ndarray, b: float) -> np.ndarray:
    """Elementwise xi_x = exp(-b eta_x); strictly positive."""
    return np.exp(-b * np.asarray(eta, dtype=np.float64))


def eta_of(xi: np.ndarray, b: float) -> np.ndarray:
    """Inverse map eta_x = -log(xi_x) / b."""
    return -np.log(np.asarray(xi, dtype=np.float64)) / b


def conserved(eta: np.ndarray, params: ModelParams) -> tuple[float, float]:
    """The two conserved quantities: (energy, volume) = (sum V_b(eta), sum eta)."""
    eta = np.asarray(eta, dtype=np.float64)
    return float(np.sum(potential(params.b, eta))), float(np.sum(eta))


def drift_field(eta: np.ndarray, params: ModelParams) -> np.ndarray:
    """Velocity field of the Hamiltonian flow, before the alpha_n*theta(n) factor.

    Component x is V_b'(eta_{x+1}) - V_b'(eta_{x-1}) with periodic indexing,
    which equals -b (xi_{x+1} - xi_{x-1}).  Sums to zero exactly on the ring,
    and is orthogonal to V_b'(eta) (both conservation laws of the flow).
    """
    vp = potential_prime(params.b, np.asarray(eta, dtype=np.float64))
    return np.roll(vp, -1) - np.roll(vp, 1)


def currents(eta: np.ndarray, params: ModelParams, x: int) -> tuple[float, float]:
    """Microscopic currents (energy, volume) across the bond (x, x+1).

    With grad u := u_{x+1} - u_x:

        j_e = -alpha_n b^2 exp(-b(eta_x + eta_{x+1}))
              + alpha_n b^2 (xi_x + xi_{x+1}) - gamma * grad V_b(eta)
        j_v =  alpha_n b  (xi_x + xi_{x+1})  - gamma * grad eta

    These satisfy the discrete continuity equations against the generator,
    L(V_b(eta_x)) = j_e(x-1) - j_e(x) and L(eta_x) = j_v(x-1) - j_v(x).
    """
    eta = np.asarray(eta, dtype=np.float64)
    n = params.n
    if not 0 <= x < n:
        raise IndexError(f"bond index {x} out of range for n={n}")
    b, g, an = params.b, params.gamma, params.alpha_n
    e0, e1 = eta[x], eta[(x + 1) % n]
    x0, x1 = np.exp(-b * e0), np.exp(-b * e1)
    je = -an * b * b * x0 * x1 + an * b * b * (x0 + x1) \
        - g * (potential(b, e1) - potential(b, e0))
    jv = an * b * (x0 + x1) - g * (e1 - e0)
    return float(je), float(jv)
