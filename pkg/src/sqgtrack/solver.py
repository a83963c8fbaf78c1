"""Time integration of the transported scalar.

Classical RK4 on the pseudo-spectral advection right-hand side, with an
adaptive CFL-limited step.  Velocity and scalar gradient are truncated
by the 2/3 rule before the physical-space product and the product is
truncated again, so quadratic aliasing never feeds back into the state.

The time loop is strictly sequential; diagnostics read immutable
snapshots of the state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry
from .series import GlobalSeries
from .spectral import (
    Grid,
    ScalarField,
    VectorField,
    half_spectrum_ops,
    irfft2_norm,
    rfft2_norm,
    velocity_from_theta,
)

EPS_U = 1e-12
TIME_TOL = 1e-9


class NonFinite(RuntimeError):
    """An RK4 stage produced non-finite values (under-resolution blowup)."""

    def __init__(self, t, state=None):
        super().__init__(f"non-finite field values at t = {t:.6g}")
        self.t = t
        self.state = state


@dataclass(frozen=True)
class SolverConfig:
    grid_n: int
    t_end: float
    cfl_safety: float = 1.0 / 6.0
    dt_max: float = 1e-2
    snapshot_times: tuple = ()
    series_stride: int = 4
    region_fraction: float = 0.5
    grad_xi_threshold: float = 10.0

    def __post_init__(self):
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")
        if self.dt_max <= 0:
            raise ValueError("dt_max must be positive")
        if self.series_stride < 1:
            raise ValueError("series_stride must be >= 1")
        times = tuple(float(t) for t in self.snapshot_times)
        if any(t < -TIME_TOL or t > self.t_end + TIME_TOL for t in times):
            raise ValueError("snapshot times must lie within [0, t_end]")
        if any(b - a <= 0 for a, b in zip(times, times[1:])):
            raise ValueError("snapshot times must be strictly ascending")
        object.__setattr__(self, "snapshot_times", times)


@dataclass
class SolverState:
    theta: ScalarField
    t: float = 0.0
    step_count: int = 0


def rhs(theta: ScalarField) -> ScalarField:
    """Advection tendency -u . grad(theta).

    Velocity and scalar gradient are truncated by the 2/3 rule before
    the physical-space product and the product is truncated again.
    Runs on the real half spectrum; equivalent to composing the public
    full-grid operators.
    """
    g = theta.grid
    n = g.n
    ops = half_spectrum_ops(n)
    keep = ops.dealias_keep
    c = rfft2_norm(theta.values)
    psi_c = -c * ops.inv_abs_k
    u1 = irfft2_norm(np.where(keep, -psi_c * ops.d2, 0.0), n)
    u2 = irfft2_norm(np.where(keep, psi_c * ops.d1, 0.0), n)
    g1 = irfft2_norm(np.where(keep, c * ops.d1, 0.0), n)
    g2 = irfft2_norm(np.where(keep, c * ops.d2, 0.0), n)
    ch = rfft2_norm(u1 * g1 + u2 * g2)
    return ScalarField(g, irfft2_norm(np.where(keep, -ch, 0.0), n))


def cfl_dt(u: VectorField, grid: Grid, cfl_safety: float, dt_max: float = 1e-2) -> float:
    """Advective step limit: safety * h / max speed, capped at dt_max."""
    if cfl_safety <= 0:
        raise ValueError("cfl_safety must be positive")
    umax = max(u.max_norm(), EPS_U)
    return min(dt_max, cfl_safety * grid.h / umax)


def rk4_step(state: SolverState, dt: float, rhs_fn=rhs) -> SolverState:
    """One classical RK4 step; raises NonFinite on any bad stage."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    th = state.theta
    g = th.grid

    def stage(values):
        out = rhs_fn(ScalarField(g, values))
        if not np.isfinite(out.values).all():
            raise NonFinite(state.t, state)
        return out.values

    v = th.values
    k1 = stage(v)
    k2 = stage(v + 0.5 * dt * k1)
    k3 = stage(v + 0.5 * dt * k2)
    k4 = stage(v + dt * k3)
    new_vals = v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.isfinite(new_vals).all():
        raise NonFinite(state.t, state)
    return SolverState(ScalarField(g, new_vals), state.t + dt, state.step_count + 1)


class SeriesAccumulator:
    """Collects global diagnostic rows; trapezoid-accumulates the
    gradient-sup integral between consecutive samples."""

    def __init__(self, region_fraction, grad_xi_threshold):
        self.rows = []
        self.fraction = region_fraction
        self.threshold = grad_xi_threshold
        self._bkm = 0.0
        self._last = None

    def sample(self, theta: ScalarField, t: float):
        if self.rows and t <= self.rows[-1][0] + TIME_TOL * 1e-3:
            return
        t1, t2, t11, t12, t22 = geometry.derivative_fields(theta)
        mag = np.hypot(t1, t2)
        omega = float(mag.max())
        u_max = velocity_from_theta(theta).max_norm()
        if self._last is not None:
            t_prev, om_prev = self._last
            self._bkm += 0.5 * (om_prev + omega) * (t - t_prev)
        self._last = (t, omega)
        area_a = area_b = overlap = 0.0
        if omega > 0.0:
            mask_a = mag >= self.fraction * omega
            alg = geometry._xi_algebra(t1, t2, t11, t12, t22)
            valid = mag >= geometry.DEFAULT_EPS_REL * omega
            gx = np.where(valid, alg.grad_xi, 0.0)
            mask_b = valid & (gx >= self.threshold)
            h2 = theta.grid.h**2
            area_a = float(mask_a.sum()) * h2
            area_b = float(mask_b.sum()) * h2
            floor = min(area_a, area_b)
            if floor > 0:
                overlap = float((mask_a & mask_b).sum()) * h2 / floor
        self.rows.append((t, omega, u_max, self._bkm, area_a, area_b, overlap))

    def build(self) -> GlobalSeries:
        arr = np.asarray(self.rows, dtype=float).reshape(-1, 7)
        return GlobalSeries(*(arr[:, i] for i in range(7)))


def run(config: SolverConfig, theta0: ScalarField, snapshot_callback=None):
    """Integrate from t = 0 to t_end.

    Steps are shortened to land exactly on each snapshot time.  Returns
    (snapshots, GlobalSeries); snapshots is a list of (t, ScalarField)
    unless a callback consumes them instead.  NonFinite propagates with
    the failing time and the last good state attached.
    """
    if theta0.grid.n != config.grid_n:
        raise ValueError("initial data grid does not match config.grid_n")
    state = SolverState(theta0)
    acc = SeriesAccumulator(config.region_fraction, config.grad_xi_threshold)
    snapshots = []

    def emit(t, th):
        if snapshot_callback is not None:
            snapshot_callback(t, th)
        else:
            snapshots.append((t, th))

    events = sorted(set(list(config.snapshot_times) + [config.t_end]))
    if events and events[0] <= TIME_TOL:
        emit(state.t, state.theta)
        events = events[1:]
    acc.sample(state.theta, state.t)

    try:
        while state.t < config.t_end - TIME_TOL:
            u = velocity_from_theta(state.theta)
            dt = cfl_dt(u, state.theta.grid, config.cfl_safety, config.dt_max)
            hit_event = False
            if events and state.t + dt >= events[0] - TIME_TOL:
                dt = events[0] - state.t
                hit_event = True
            state = rk4_step(state, dt)
            if hit_event:
                state = replace(state, t=events.pop(0))  # land exactly
                if any(abs(state.t - ts) <= TIME_TOL for ts in config.snapshot_times):
                    emit(state.t, state.theta)
            if state.step_count % config.series_stride == 0:
                acc.sample(state.theta, state.t)
    except NonFinite as exc:
        err = NonFinite(exc.t, state)
        err.series = acc.build()
        raise err from None

    acc.sample(state.theta, state.t)
    return snapshots, acc.build()
