"""Time evolution of the accelerated process.

The generator is theta(n) * (alpha_n * A + gamma * S): a deterministic
Hamiltonian drift plus independent Poisson exchange clocks on the bonds.
Two schemes are provided:

* ``split_strang`` (default): Strang steps half-drift / exchange / half-drift.
  The drift is integrated by RK4 on the xi variables, where it is the
  polynomial field dxi_x = b^2 * alpha_n * theta(n) * xi_x (xi_{x+1}-xi_{x-1}).
  The exchange block draws the exact Poisson number of events for the step
  window and applies that many uniformly chosen bond swaps in sequence, which
  reproduces the exchange dynamics exactly in law (the jump chain of the
  exchange process picks bonds uniformly); the only in-law error is the
  O(dt^2) Strang coupling between drift and exchange.
* ``event_driven``: exact exponential event times with drift integrated
  between events.  Slower; used as the small-n cross-check.

Ensembles evolve as (replicas, n) blocks in fixed-size chunks, each chunk
owning an independent RNG substream, so results do not depend on scheduling
or worker count.  The hot loop runs in the compiled extension when present
and falls back to numpy otherwise; both produce bit-identical paths.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .equilibrium import STREAM_DYNAMICS, moments, sample_gibbs_xi_chunk, substream
from .model import ModelParams, validate_configuration, xi_of, eta_of

try:
    from . import _kernel as _impl

    BACKEND = "cython"
except ImportError:  # pragma: no cover - depends on build environment
    from . import _fallback as _impl

    BACKEND = "python"

__all__ = [
    "BACKEND",
    "IntegratorSpec",
    "Trajectory",
    "default_dt",
    "step",
    "evolve",
    "run_ensemble",
    "realized_qv",
    "save_trajectory",
]

CHUNK = 256  # replicas per RNG substream in ensemble runs


@dataclass(frozen=True)
class IntegratorSpec:
    """Numerical controls for the split-step integrator.

    dt=None selects the default step: the largest dt with
    gamma*theta(n)*dt <= exchange_cap (events per bond per step) and
    b^2*|alpha_n|*theta(n)*rho*dt <= drift_cap (drift advance per step).
    """

    dt: float | None = None
    scheme: str = "split_strang"
    ode_substeps: int = 1
    exchange_cap: float = 0.5
    drift_cap: float = 0.05

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("split_strang", "event_driven"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.ode_substeps < 1:
            raise ValueError("ode_substeps must be >= 1")
        if not (self.exchange_cap > 0 and self.drift_cap > 0):
            raise ValueError("caps must be positive")


@dataclass
class Trajectory:
    """Snapshots of one path at the requested macroscopic times."""

    times: np.ndarray
    states: np.ndarray  # (len(times), n) of eta
    exchange_count: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0) and self.times.size > 1:
            raise ValueError("times must be strictly increasing")
        if self.states.shape[0] != self.times.size:
            raise ValueError("one state per snapshot time required")


def default_dt(params: ModelParams, spec: IntegratorSpec) -> float:
    if spec.dt is not None:
        return spec.dt
    dt = spec.exchange_cap / params.swap_rate if params.swap_rate > 0 else math.inf
    drift_speed = abs(params.drift_rate) * params.b**2 * moments(params).rho
    if drift_speed > 0:
        dt = min(dt, spec.drift_cap / drift_speed)
    if not math.isfinite(dt):
        dt = 1.0  # static process: any step works
    return dt


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return substream(int(rng), STREAM_DYNAMICS)


def _check_finite(xi: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(xi)) or np.any(xi <= 0):
        raise FloatingPointError(
            f"state blew up at t={t:.6g}: min={np.nanmin(xi):.3g}, "
            f"max={np.nanmax(xi):.3g}; reduce dt or drift_cap"
        )


def _advance_block(xi: np.ndarray, params: ModelParams, spec: IntegratorSpec,
                   t0: float, t1: float, rng: np.random.Generator,
                   scratch: np.ndarray, step_cb=None) -> int:
    """Advance the (R, n) block from t0 to t1 in place; returns event count.

    step_cb(t, dt, xi), when given, is called before every step with the
    current state; integrand observers use it to accumulate time integrals
    densely (fast local integrands decorrelate on the step scale, so
    snapshot-rate quadrature would add sampling noise ~ Var * spacing * t).
    """
    if t1 <= t0:
        return 0
    n = params.n
    nrep = xi.shape[0]
    dt_target = default_dt(params, spec)
    nsteps = max(1, math.ceil((t1 - t0) / dt_target))
    dt = (t1 - t0) / nsteps
    lam = n * params.swap_rate * dt
    tau_half = params.drift_rate * params.b**2 * dt * 0.5
    total_events = 0
    for k in range(nsteps):
        if step_cb is not None:
            step_cb(t0 + k * dt, dt, xi)
        counts = rng.poisson(lam, nrep).astype(np.int64)
        tot = int(counts.sum())
        bonds = rng.integers(0, n, size=tot, dtype=np.int64)
        offsets = np.zeros(nrep + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        _impl.strang_step(xi, tau_half, spec.ode_substeps, offsets, bonds, scratch)
        total_events += tot
    _check_finite(xi, t1)
    return total_events


def _advance_event_driven(xi: np.ndarray, params: ModelParams, spec: IntegratorSpec,
                          t0: float, t1: float, rng: np.random.Generator,
                          scratch: np.ndarray, step_cb=None) -> int:
    """Exact continuous-time evolution of a (1, n) block (validation scheme)."""
    n = params.n
    total_rate = n * params.swap_rate
    kdt = params.drift_rate * params.b**2

    def kick(duration: float) -> None:
        if kdt == 0.0 or duration <= 0.0:
            return
        nsub = max(1, math.ceil(abs(kdt) * duration * moments(params).rho / spec.drift_cap))
        _impl.rk4_kick(xi, kdt * duration, nsub * spec.ode_substeps, scratch)

    t = t0
    events = 0
    while True:
        if total_rate == 0.0:
            if step_cb is not None:
                step_cb(t, t1 - t, xi)
            kick(t1 - t)
            break
        wait = rng.exponential(1.0 / total_rate)
        hop = min(wait, t1 - t)
        if step_cb is not None and hop > 0:
            step_cb(t, hop, xi)
        if t + wait >= t1:
            kick(t1 - t)
            break
        kick(wait)
        b = int(rng.integers(0, n))
        b2 = (b + 1) % n
        xi[0, b], xi[0, b2] = xi[0, b2], xi[0, b]
        t += wait
        events += 1
    _check_finite(xi, t1)
    return events


def step(config: np.ndarray, params: ModelParams, spec: IntegratorSpec,
         rng) -> np.ndarray:
    """Advance one configuration by one macroscopic step of size spec.dt
    (or the default step) and return the new configuration."""
    eta = validate_configuration(config, params)
    rng = _as_rng(rng)
    dt = default_dt(params, spec)
    xi = xi_of(eta, params.b)[None, :].copy()
    scratch = np.empty((5, params.n))
    if spec.scheme == "event_driven":
        _advance_event_driven(xi, params, spec, 0.0, dt, rng, scratch)
    else:
        _advance_block(xi, params, spec, 0.0, dt, rng, scratch)
    return eta_of(xi[0], params.b)


def evolve(initial: np.ndarray, params: ModelParams, spec: IntegratorSpec,
           T: float, snapshot_times: Sequence[float], rng) -> Trajectory:
    """Evolve one path and record snapshots at the requested times.

    snapshot_times must be sorted within [0, T]; the integrator subdivides
    each inter-snapshot interval into equal steps no larger than the default
    step, so it lands exactly on every requested time.
    """
    eta = validate_configuration(initial, params)
    times = np.asarray(sorted(float(t) for t in snapshot_times), dtype=np.float64)
    if times.size == 0:
        raise ValueError("snapshot_times must be non-empty")
    if times[0] < 0 or times[-1] > T + 1e-12:
        raise ValueError("snapshot_times must lie in [0, T]")
    rng = _as_rng(rng)
    xi = xi_of(eta, params.b)[None, :].copy()
    scratch = np.empty((5, params.n))
    states = np.empty((times.size, params.n))
    advance = _advance_event_driven if spec.scheme == "event_driven" else _advance_block
    t_prev = 0.0
    count = 0
    for i, t in enumerate(times):
        count += advance(xi, params, spec, t_prev, t, rng, scratch)
        states[i] = eta_of(xi[0], params.b)
        t_prev = t
    return Trajectory(times=times, states=states, exchange_count=count)


def run_ensemble(params: ModelParams, spec: IntegratorSpec, times: Sequence[float],
                 n_replicas: int, seed: int, observers: Iterable,
                 initial: np.ndarray | None = None,
                 step_observers: Iterable = ()) -> int:
    """Stream an equilibrium ensemble through the snapshot grid.

    Replicas are evolved in chunks of CHUNK, each chunk drawing its initial
    configurations and all dynamics randomness from substream
    (seed, STREAM_DYNAMICS, chunk_index).  At every snapshot time each
    observer's ``observe(time_index, t, xi_block, replica_offset)`` is called
    with the (chunk, n) block of xi values.  step_observers instead expose
    ``accumulate(t, dt, xi_block, replica_offset)`` at every integrator step;
    time integrals of fast local quantities must be taken there, since
    snapshot-rate quadrature adds sampling variance.  Returns total exchange
    events.

    Observers see xi (not eta); eta = -log(xi)/b where needed.
    """
    times = np.asarray([float(t) for t in times], dtype=np.float64)
    if np.any(np.diff(times) < 0) or times.size == 0 or times[0] < 0:
        raise ValueError("times must be sorted, nonnegative, non-empty")
    observers = list(observers)
    step_observers = list(step_observers)
    for obs in observers + step_observers:
        obs.start(times, n_replicas, params)
    scratch = np.empty((5, params.n))
    advance = _advance_event_driven if spec.scheme == "event_driven" else _advance_block
    total_events = 0
    for r0 in range(0, n_replicas, CHUNK):
        rows = min(CHUNK, n_replicas - r0)
        rng = substream(seed, STREAM_DYNAMICS, r0 // CHUNK)
        if initial is None:
            xi = sample_gibbs_xi_chunk(params, rows, rng)
        else:
            xi = xi_of(np.broadcast_to(initial, (rows, params.n)).copy(), params.b)
        if spec.scheme == "event_driven" and rows > 1:
            for r in range(rows):
                block = xi[r : r + 1]
                cb = _make_step_cb(step_observers, r0 + r)
                t_prev = 0.0
                for i, t in enumerate(times):
                    total_events += advance(block, params, spec, t_prev, t, rng,
                                            scratch, cb)
                    t_prev = t
                    for obs in observers:
                        obs.observe(i, t, block, r0 + r)
        else:
            cb = _make_step_cb(step_observers, r0)
            t_prev = 0.0
            for i, t in enumerate(times):
                total_events += advance(xi, params, spec, t_prev, t, rng, scratch, cb)
                t_prev = t
                for obs in observers:
                    obs.observe(i, t, xi, r0)
    for obs in observers + step_observers:
        obs.finish()
    return total_events


def _make_step_cb(step_observers, r0):
    if not step_observers:
        return None

    def cb(t, dt, xi):
        for obs in step_observers:
            obs.accumulate(t, dt, xi, r0)

    return cb


def realized_qv(traj: Trajectory, params: ModelParams, f1, f2) -> float:
    """Predictable quadratic variation of the field martingale along a path.

    Evaluates, at every snapshot, the exchange carre-du-champ

        gamma*theta(n)/n^3 * sum_x [ (grad_n F1)^2 (Dxi)^2
                                     + (grad_n f2)^2 (Deta)^2
                                     + 2 (grad_n F1)(grad_n f2)(Dxi)(Deta) ]

    with F1 the frame-shifted first test function, and integrates over the
    snapshot grid by the trapezoid rule.
    """
    from .fields import frame_velocity

    if traj.times.size < 2:
        raise ValueError("need at least two snapshots to integrate")
    n = params.n
    cn, _ = frame_velocity(params)
    w = params.gamma * params.theta_n / n**3
    vals = np.empty(traj.times.size)
    grid2 = f2.lattice_values(n)
    g2 = n * (np.roll(grid2, -1) - grid2)
    for i, t in enumerate(traj.times):
        eta = traj.states[i]
        xi = xi_of(eta, params.b)
        grid1 = f1.lattice_values(n, shift=math.fmod(cn * t, 1.0))
        g1 = n * (np.roll(grid1, -1) - grid1)
        dxi = np.roll(xi, -1) - xi
        deta = np.roll(eta, -1) - eta
        vals[i] = w * np.sum(g1 * g1 * dxi * dxi + g2 * g2 * deta * deta
                             + 2.0 * g1 * g2 * dxi * deta)
    return float(np.trapezoid(vals, traj.times))


def save_trajectory(traj: Trajectory, prefix: str, params: ModelParams,
                    seed: int, fmt: str = "csv") -> list[str]:
    """Write snapshots plus a JSON sidecar with parameters and seed.

    fmt="csv": one row per snapshot (time, eta_0..eta_{n-1});
    fmt="npy": flat binary (times and states stacked).
    """
    written = []
    if fmt == "csv":
        path = f"{prefix}.csv"
        header = "t," + ",".join(f"eta_{x}" for x in range(params.n))
        data = np.column_stack([traj.times, traj.states])
        np.savetxt(path, data, delimiter=",", header=header, comments="",
                   fmt="%.17g")
        written.append(path)
    elif fmt == "npy":
        path = f"{prefix}.npy"
        np.save(path, np.column_stack([traj.times, traj.states]))
        written.append(path)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    sidecar = f"{prefix}.json"
    with open(sidecar, "w") as fh:
        json.dump({"params": params.__dict__, "seed": seed,
                   "exchange_count": traj.exchange_count,
                   "columns": ["t"] + [f"eta_{x}" for x in range(params.n)]},
                  fh, indent=2)
    written.append(sidecar)
    return written
