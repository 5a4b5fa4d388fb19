"""Independent oracles used by the tests: finite differences, series sums,
reference ODE integration, product-measure moment algebra.  Nothing here
imports the code paths it is used to check (beyond plain data types)."""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp


def potential_series(b: float, u: float, terms: int = 40) -> float:
    """V_b(u) as the Taylor series sum_{k>=2} (-b u)^k / k!."""
    total = 0.0
    term = 1.0
    x = -b * u
    for k in range(1, terms + 1):
        term *= x / k
        if k >= 2:
            total += term
    return total


def central_difference(f, u: float, h: float = 1e-6) -> float:
    return (f(u + h) - f(u - h)) / (2.0 * h)


def reference_drift_solution(eta0: np.ndarray, rate: float, b: float, T: float) -> np.ndarray:
    """High-accuracy solve of d eta_x/dt = rate * (V'(eta_{x+1}) - V'(eta_{x-1})),
    integrated in the eta variables by an adaptive solver."""

    def rhs(_, eta):
        vp = -b * np.expm1(-b * eta)
        return rate * (np.roll(vp, -1) - np.roll(vp, 1))

    sol = solve_ivp(rhs, (0.0, T), eta0, method="DOP853", rtol=1e-12, atol=1e-12)
    return sol.y[:, -1]


def gamma_central_moments(shape: float, beta: float) -> tuple[float, float, float]:
    """(m2, m3, m4) central moments of Gamma(shape, rate=beta)."""
    m2 = shape / beta**2
    m3 = 2.0 * shape / beta**3
    m4 = (3.0 * shape**2 + 6.0 * shape) / beta**4
    return m2, m3, m4


def bg_static_second_moment(psi_vals: np.ndarray, n: int, eps: float,
                            shape: float, beta: float) -> float:
    """Exact E[G^2] for G = sum_x psi_x W_x over the product measure, where

        W_x = xibar_x xibar_{x+1} - (box average over (x, x+ell])^2
              + tau^2/(eps n),   ell = floor(eps n).

    Expands every W_x as a quadratic form in the centered iid site variables
    and evaluates fourth moments by multiplicity patterns (only the pair-pair
    and quadruple patterns survive for centered independent variables).
    """
    m2, m3, m4 = gamma_central_moments(shape, beta)
    ell = int(math.floor(eps * n))
    tau2 = m2
    const = tau2 / (eps * n)

    # quadratic-form coefficients per x: dict (a, b) sorted tuple -> coeff
    terms = []
    for x in range(n):
        d: dict[tuple[int, int], float] = {}
        a, b = x % n, (x + 1) % n
        key = (min(a, b), max(a, b))
        d[key] = d.get(key, 0.0) + 1.0
        win = [(x + 1 + j) % n for j in range(ell)]
        for i in range(ell):
            for j in range(ell):
                a, b = win[i], win[j]
                key = (min(a, b), max(a, b))
                d[key] = d.get(key, 0.0) - 1.0 / ell**2
        terms.append(d)

    def e_quad(d: dict) -> float:
        return sum(c * m2 for (a, b), c in d.items() if a == b)

    def e_quad_quad(d1: dict, d2: dict) -> float:
        # only fully-paired multiplicity patterns survive: a shared unordered
        # pair gives m2^2 (m4 on shared diagonals); distinct diagonals give
        # m2*m2; any single-site or triple overlap vanishes for centered sites
        total = 0.0
        for (a1, b1), c1 in d1.items():
            c2 = d2.get((a1, b1))
            if c2 is None:
                continue
            total += c1 * c2 * (m4 if a1 == b1 else m2 * m2)
        diag1 = {a: c for (a, b), c in d1.items() if a == b}
        diag2 = {a: c for (a, b), c in d2.items() if a == b}
        for a, c1 in diag1.items():
            for b, c2 in diag2.items():
                if a != b:
                    total += c1 * c2 * m2 * m2
        return total

    # assemble E[G^2] = sum_{x,y} psi_x psi_y E[W_x W_y]
    total = 0.0
    for x in range(n):
        for y in range(n):
            ew = e_quad_quad(terms[x], terms[y]) \
                + const * e_quad(terms[y]) + const * e_quad(terms[x]) + const * const
            total += psi_vals[x] * psi_vals[y] * ew
    return total


def bg_static_second_moment_mc(psi_vals: np.ndarray, n: int, eps: float,
                               shape: float, beta: float, draws: int,
                               rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo version of the same expectation (used to validate the
    moment algebra itself); returns (estimate, standard error)."""
    ell = int(math.floor(eps * n))
    tau2 = shape / beta**2
    xibar = rng.gamma(shape, 1.0 / beta, size=(draws, n)) - shape / beta
    ext = np.concatenate([xibar, xibar[:, :ell]], axis=1)
    cs = np.zeros((draws, n + ell + 1))
    np.cumsum(ext, axis=1, out=cs[:, 1:])
    box = (cs[:, ell + 1 : n + ell + 1] - cs[:, 1 : n + 1]) / ell
    w = xibar * np.roll(xibar, -1, axis=1) - box**2 + tau2 / (eps * n)
    g = w @ psi_vals
    sq = g**2
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(draws))
