"""Solver contracts: tendency oracles, CFL step, RK4 order, and the
conservation/steady-state invariants of divergence-free transport."""

import math

import numpy as np
import pytest

import sqgtrack as sq
from sqgtrack.solver import NonFinite, SolverConfig, SolverState, cfl_dt, rhs, rk4_step, run
from sqgtrack.spectral import rfft2_norm
from conftest import cmt_field


def mode_sum_rhs_oracle(modes, points):
    """Advection tendency by exact mode arithmetic.

    ``modes`` lists ((k1, k2), amp, phase) cosine terms of theta.  The
    velocity of each term and the gradient of each term are expanded
    analytically and their product evaluated pointwise, independent of
    any FFT. De-aliasing is irrelevant when all product modes are far
    below the cutoff.
    """
    out = np.zeros(len(points))
    for (a1, a2), amp_a, ph_a in modes:
        norm = np.hypot(a1, a2)
        b = -amp_a / norm  # stream coefficient
        for (c1, c2), amp_c, ph_c in modes:
            for x, acc in zip(points, range(len(points))):
                sa = np.sin(a1 * x[0] + a2 * x[1] + ph_a)
                sc = np.sin(c1 * x[0] + c2 * x[1] + ph_c)
                u1 = b * a2 * sa
                u2 = -b * a1 * sa
                g1 = -amp_c * c1 * sc
                g2 = -amp_c * c2 * sc
                out[acc] -= u1 * g1 + u2 * g2
    return out


class TestRhs:
    def test_constant(self):
        g = sq.Grid(32)
        th = sq.ScalarField(g, np.full((32, 32), 5.0))
        assert np.abs(rhs(th).values).max() == 0.0

    def test_single_mode_steady(self):
        g = sq.Grid(64)
        th = sq.ScalarField.from_function(g, lambda x1, x2: np.cos(x1))
        assert np.abs(rhs(th).values).max() < 1e-14

    def test_two_orthogonal_modes_cancel(self):
        # u and grad theta stay pointwise orthogonal for cos x1 + cos x2
        g = sq.Grid(64)
        th = sq.ScalarField.from_function(g, lambda x1, x2: np.cos(x1) + np.cos(x2))
        pts = np.array([[0.3, 1.1], [2.0, 5.1], [4.4, 0.2]])
        oracle = mode_sum_rhs_oracle([((1, 0), 1.0, 0.0), ((0, 1), 1.0, 0.0)], pts)
        assert np.abs(oracle).max() < 1e-14
        assert np.abs(rhs(th).values).max() < 1e-13

    def test_against_mode_sum_oracle(self):
        # cos x1 + cos 2x2 has the nonzero tendency sin(x1) sin(2 x2)
        g = sq.Grid(64)
        th = sq.ScalarField.from_function(g, lambda x1, x2: np.cos(x1) + np.cos(2 * x2))
        out = rhs(th)
        x1, x2 = g.coords()
        idx = np.random.default_rng(2).integers(0, 64, size=(12, 2))
        pts = np.array([[i * g.h, j * g.h] for j, i in idx])
        oracle = mode_sum_rhs_oracle(
            [((1, 0), 1.0, 0.0), ((0, 2), 1.0, 0.0)], pts)
        got = np.array([out.values[j, i] for j, i in idx])
        np.testing.assert_allclose(got, oracle, atol=1e-10)
        assert np.abs(out.values - np.sin(x1) * np.sin(2 * x2)).max() < 1e-13

    def test_zero_mean_tendency(self, cmt128):
        c = rfft2_norm(rhs(cmt128).values)
        assert abs(c[0, 0]) < 1e-14


class TestCfl:
    def test_arithmetic(self):
        g = sq.Grid(256)
        u = sq.VectorField(
            sq.ScalarField(g, np.full((256, 256), 1.0)), sq.ScalarField.zeros(g))
        assert cfl_dt(u, g, 1 / 6, dt_max=1.0) == pytest.approx((2 * np.pi / 256) / 6)

    def test_zero_velocity_hits_cap(self):
        g = sq.Grid(64)
        u = sq.VectorField(sq.ScalarField.zeros(g), sq.ScalarField.zeros(g))
        assert cfl_dt(u, g, 1 / 6, dt_max=1e-2) == 1e-2

    def test_rejects_bad_safety(self):
        g = sq.Grid(64)
        u = sq.VectorField(sq.ScalarField.zeros(g), sq.ScalarField.zeros(g))
        with pytest.raises(ValueError):
            cfl_dt(u, g, 0.0)


class TestRk4Step:
    def test_steady_state_single_mode(self):
        g = sq.Grid(64)
        th = sq.ScalarField.from_function(g, lambda x1, x2: np.cos(x1))
        state = rk4_step(SolverState(th), 0.1)
        assert np.abs(state.theta.values - th.values).max() < 1e-12
        assert state.step_count == 1

    def test_constant_exact(self):
        g = sq.Grid(32)
        th = sq.ScalarField(g, np.full((32, 32), 2.5))
        state = rk4_step(SolverState(th), 0.05)
        np.testing.assert_array_equal(state.theta.values, th.values)

    def test_refinement_order(self, cmt128):
        # one step vs two half steps differ at the local truncation
        # order: log2 ratios should sit near 5
        errs = []
        for dt in (0.1, 0.05, 0.025):
            s0 = SolverState(cmt128)
            one = rk4_step(s0, dt).theta.values
            two = rk4_step(rk4_step(s0, dt / 2), dt / 2).theta.values
            errs.append(np.abs(one - two).max())
        orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert min(orders) >= 4.5

    def test_nonfinite_detection(self, cmt128):
        bad = sq.ScalarField(cmt128.grid, cmt128.values * np.inf)
        with pytest.raises(NonFinite):
            rk4_step(SolverState(bad), 1e-3)


class TestRun:
    def test_zero_field(self):
        cfg = SolverConfig(grid_n=32, t_end=1.0, snapshot_times=(0.0, 0.5, 1.0))
        snaps, series = run(cfg, sq.ScalarField.zeros(sq.Grid(32)))
        assert [t for t, _ in snaps] == [0.0, 0.5, 1.0]
        assert np.all(series.omega == 0.0)
        assert np.all(series.bkm == 0.0)

    def test_steady_single_mode(self):
        g = sq.Grid(64)
        th = sq.ScalarField.from_function(g, lambda x1, x2: np.cos(x1))
        cfg = SolverConfig(grid_n=64, t_end=1.0, snapshot_times=(1.0,))
        snaps, _ = run(cfg, th)
        assert snaps[-1][0] == 1.0
        assert np.abs(snaps[-1][1].values - th.values).max() < 1e-10

    def test_snapshot_landing_exact(self, cmt64):
        times = (0.0, 0.13, 0.2, 0.47)
        cfg = SolverConfig(grid_n=64, t_end=0.5, snapshot_times=times)
        snaps, series = run(cfg, cmt64)
        assert [t for t, _ in snaps] == list(times)
        assert np.all(np.diff(series.t) > 0)

    def test_mean_conserved(self, cmt128):
        cfg = SolverConfig(grid_n=128, t_end=0.5)
        snaps, _ = run(cfg, cmt128, snapshot_callback=lambda t, th: None)
        cfg = SolverConfig(grid_n=128, t_end=0.5, snapshot_times=(0.5,))
        snaps, _ = run(cfg, cmt128)
        drift = abs(snaps[-1][1].values.mean() - cmt128.values.mean())
        assert drift < 1e-12

    def test_l2_conservation_short(self, cmt128):
        cfg = SolverConfig(grid_n=128, t_end=1.0, snapshot_times=(1.0,))
        snaps, _ = run(cfg, cmt128)
        h2 = cmt128.grid.h**2
        n0 = math.sqrt(h2 * np.sum(cmt128.values**2))
        n1 = math.sqrt(h2 * np.sum(snaps[-1][1].values**2))
        assert abs(n1 - n0) / n0 < 1e-7

    def test_resolution_convergence(self):
        finals = {}
        for n in (128, 256):
            th = cmt_field(sq.Grid(n))
            cfg = SolverConfig(grid_n=n, t_end=1.0, snapshot_times=(1.0,))
            snaps, _ = run(cfg, th)
            finals[n] = snaps[-1][1].values
        coarse = finals[128]
        fine = finals[256][::2, ::2]
        assert np.abs(coarse - fine).max() < 1e-8

    def test_time_reversal(self):
        # integrate forward, then with the negated tendency back to the
        # start; RK4 is not symmetric so the defect is discretization
        g = sq.Grid(256)
        th = cmt_field(g)
        cfg = SolverConfig(grid_n=256, t_end=1.0, snapshot_times=(1.0,))
        snaps, _ = run(cfg, th)
        state = SolverState(snaps[-1][1])
        neg = lambda f: sq.ScalarField(f.grid, -rhs(f).values)
        while state.t < 1.0 - 1e-9:
            u = sq.velocity_from_theta(state.theta)
            dt = min(cfl_dt(u, g, 1 / 6), 1.0 - state.t)
            state = rk4_step(state, dt, rhs_fn=neg)
        assert np.abs(state.theta.values - th.values).max() < 1e-7

    def test_series_strictly_increasing_and_bkm_monotone(self, cmt64):
        cfg = SolverConfig(grid_n=64, t_end=0.4, series_stride=2,
                           snapshot_times=(0.1, 0.25))
        _, series = run(cfg, cmt64)
        assert np.all(np.diff(series.t) > 0)
        assert np.all(np.diff(series.bkm) >= 0)
        assert np.all(series.omega > 0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(grid_n=64, t_end=0.0)
        with pytest.raises(ValueError):
            SolverConfig(grid_n=64, t_end=1.0, cfl_safety=1.5)
        with pytest.raises(ValueError):
            SolverConfig(grid_n=64, t_end=1.0, snapshot_times=(0.5, 0.2))
        with pytest.raises(ValueError):
            SolverConfig(grid_n=64, t_end=1.0, snapshot_times=(2.0,))
