"""Pure-numpy twin of the compiled kernel.

Same call signatures, same arithmetic expression order, same RNG consumption
(all draws happen in the shared driver), so trajectories are bit-identical
to the compiled backend.  Only the swap application is restructured: events
are padded to a rectangle and applied slot-by-slot across replicas, which
preserves each replica's event order.
"""

from __future__ import annotations

import numpy as np


def _rhs(y: np.ndarray) -> np.ndarray:
    return y * (np.roll(y, -1, axis=1) - np.roll(y, 1, axis=1))


def rk4_kick(xi: np.ndarray, tau: float, substeps: int, scratch=None) -> None:
    h = tau / substeps
    h2 = 0.5 * h
    h6 = h / 6.0
    for _ in range(substeps):
        k1 = _rhs(xi)
        k2 = _rhs(xi + h2 * k1)
        k3 = _rhs(xi + h2 * k2)
        k4 = _rhs(xi + h * k3)
        xi += h6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def apply_swaps(xi: np.ndarray, offsets: np.ndarray, bonds: np.ndarray) -> None:
    nrep, n = xi.shape
    counts = np.diff(offsets)
    kmax = int(counts.max()) if counts.size else 0
    if kmax == 0:
        return
    # replica-major flat order fills the padded matrix row by row
    mat = np.full((nrep, kmax), -1, dtype=np.int64)
    mask = np.arange(kmax)[None, :] < counts[:, None]
    mat[mask] = bonds
    rows = np.arange(nrep)
    for j in range(kmax):
        act = mat[:, j] >= 0
        if not act.any():
            break
        r = rows[act]
        b = mat[act, j]
        b2 = (b + 1) % n
        tmp = xi[r, b].copy()
        xi[r, b] = xi[r, b2]
        xi[r, b2] = tmp


def strang_step(xi, tau_half, substeps, offsets, bonds, scratch=None) -> None:
    if tau_half != 0.0:
        rk4_kick(xi, tau_half, substeps)
    apply_swaps(xi, offsets, bonds)
    if tau_half != 0.0:
        rk4_kick(xi, tau_half, substeps)
