"""Direction-field diagnostics, regions, contours, and curve sampling.

Oracles: straight level sets (single modes), circles of a radial bump
(curvature 1/r, grad-xi Frobenius 1/r, zero divergence), and a
high-order finite-difference reconstruction on a 4x finer grid.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import sqgtrack as sq
from sqgtrack.geometry import (
    DegenerateField,
    EmptyContour,
    FieldProbe,
    GridMismatch,
    arc_through_point,
    check_div_identity,
    exp_integral_along,
    extract_contour,
    geometry_from_theta,
    overlap_stats,
    polyline_length,
    region_A,
    region_B,
    segment_quantities,
)
from conftest import cmt_field, periodic_bump


class TestGeometryFields:
    def test_straight_level_sets(self):
        g = sq.Grid(128)
        th = sq.ScalarField.from_function(g, lambda x1, x2: np.cos(x2))
        geom = geometry_from_theta(th)
        assert np.nanmax(geom.curvature.values) < 1e-10
        assert np.nanmax(np.abs(geom.div_xi.values)) < 1e-10
        # all on-mask normals fall back to the left perpendicular
        assert geom.normal_fallback[geom.valid_mask].all()

    def test_constant_field_degenerate(self):
        g = sq.Grid(32)
        th = sq.ScalarField(g, np.full((32, 32), 1.0))
        with pytest.raises(DegenerateField):
            geometry_from_theta(th)

    def test_unit_tangent_and_orthogonality(self, bump256):
        geom = geometry_from_theta(bump256)
        m = geom.valid_mask
        xi1 = geom.xi.x1_component.values[m]
        xi2 = geom.xi.x2_component.values[m]
        assert np.abs(np.hypot(xi1, xi2) - 1.0).max() < 1e-12
        n1 = geom.normal.x1_component.values[m]
        n2 = geom.normal.x2_component.values[m]
        assert np.abs(xi1 * n1 + xi2 * n2).max() < 1e-10
        # tangency: xi . grad theta = 0 by construction
        g1 = -geom.grad_perp_theta.x2_component.values[m]
        g2 = geom.grad_perp_theta.x1_component.values[m]
        scale = geom.max_magnitude
        assert np.abs(xi1 * g1 + xi2 * g2).max() < 1e-10 * scale

    def test_bump_curvature_one_over_r(self, bump256):
        probe = FieldProbe(bump256)
        ang = np.linspace(0, 2 * np.pi, 24, endpoint=False)
        for r in (0.3, 0.5, 0.8, 1.0):
            pts = np.stack([np.pi + r * np.cos(ang), np.pi + r * np.sin(ang)], axis=-1)
            alg = probe.direction_quantities(pts)
            assert np.abs(alg.kappa * r - 1.0).max() < 0.01
            # field scale for the divergence is the grad-xi magnitude
            assert np.abs(alg.div_xi).max() < 1e-6 * alg.grad_xi.max()

    def test_curvature_closed_form_matches_entries(self, bump256):
        # two independent computations of the same quantity
        geom = geometry_from_theta(bump256, eps_rel=1e-6)
        probe = FieldProbe(bump256)
        x1, x2 = bump256.grid.coords()
        m = geom.valid_mask
        alg = probe.direction_quantities(
            np.stack([x1[m][::37], x2[m][::37]], axis=-1))
        from_entries = np.hypot(alg.curv1, alg.curv2)
        rel = np.abs(from_entries - alg.kappa) / np.maximum(alg.kappa, 1e-30)
        assert rel.max() < 1e-8

    def test_normal_orientation(self, bump256):
        # xi . grad xi = kappa n with kappa > 0 away from the floor
        geom = geometry_from_theta(bump256, eps_rel=1e-4)
        m = geom.valid_mask & ~geom.normal_fallback
        n1 = geom.normal.x1_component.values[m]
        n2 = geom.normal.x2_component.values[m]
        assert np.abs(np.hypot(n1, n2) - 1.0).max() < 1e-9

    def test_against_finite_difference_oracle(self):
        # 8th-order central differences of the analytic field on a 4x
        # finer grid, compared where the quotient is well conditioned
        n = 64
        g = sq.Grid(n)
        th = cmt_field(g)
        geom = geometry_from_theta(th)

        nf = 4 * n
        gf = sq.Grid(nf)
        vals = cmt_field(gf).values
        hf = gf.h
        c1 = np.array([3, -32, 168, -672, 0, 672, -168, 32, -3]) / (840 * hf)
        c2 = np.array([-9, 128, -1008, 8064, -14350,
                       8064, -1008, 128, -9]) / (5040 * hf**2)

        def fd(arr, coeffs, axis):
            out = np.zeros_like(arr)
            for off, w in zip(range(-4, 5), coeffs):
                out += w * np.roll(arr, -off, axis=axis)
            return out

        t1 = fd(vals, c1, 1)
        t2 = fd(vals, c1, 0)
        t11 = fd(vals, c2, 1)
        t22 = fd(vals, c2, 0)
        t12 = fd(t1, c1, 0)
        from sqgtrack.geometry import _xi_algebra
        alg = _xi_algebra(t1, t2, t11, t12, t22)
        kappa_fd = alg.kappa[::4, ::4]
        div_fd = alg.div_xi[::4, ::4]
        mag = geom.magnitude.values
        well = mag >= 1e-3 * geom.max_magnitude
        for ours, oracle in ((geom.curvature.values, kappa_fd),
                             (geom.div_xi.values, div_fd)):
            err = np.abs(ours - oracle)[well]
            scale = np.abs(oracle[well]).max()
            assert err.max() < 1e-4 * scale


class TestDivIdentity:
    def test_straight_level_sets(self):
        g = sq.Grid(128)
        th = sq.ScalarField.from_function(g, lambda x1, x2: np.cos(x2))
        assert check_div_identity(geometry_from_theta(th)) < 1e-10

    def test_radial_bump(self, bump256):
        # radial symmetry kills both terms; the mask keeps the fringe
        # amplification (division by small magnitudes) out of the sup
        geom = geometry_from_theta(bump256, eps_rel=1e-6)
        assert check_div_identity(geom) < 1e-8

    def test_cmt(self):
        g = sq.Grid(256)
        geom = geometry_from_theta(cmt_field(g))
        assert check_div_identity(geom) < 1e-6


class TestRegions:
    def test_region_a_flat_field_empty(self):
        g = sq.Grid(32)
        mask = region_A(sq.ScalarField.zeros(g))
        assert mask.area == 0.0

    def test_region_a_analytic_measure(self):
        # |grad_perp theta| = |sin x1| for theta = cos x1; half-max
        # bands are x1 in [pi/6, 5pi/6] and [7pi/6, 11pi/6]
        n = 256
        g = sq.Grid(n)
        th = sq.ScalarField.from_function(g, lambda x1, x2: np.cos(x1))
        mask = region_A(th, 0.5)
        x = np.arange(n) * g.h
        expected_cols = int(np.sum(np.abs(np.sin(x)) >= 0.5))
        assert mask.member.sum() == expected_cols * n
        assert abs(mask.area - (4 * np.pi / 3) * 2 * np.pi) < 0.01 * mask.area

    @given(st.floats(0.1, 0.45), st.floats(0.5, 0.9))
    @settings(max_examples=15, deadline=None)
    def test_region_a_monotone_in_fraction(self, f_lo, f_hi):
        th = periodic_bump(sq.Grid(64))
        lo = region_A(th, f_lo)
        hi = region_A(th, f_hi)
        assert np.all(lo.member[hi.member])  # hi subset of lo

    def test_region_b_straight_lines_empty(self):
        g = sq.Grid(64)
        th = sq.ScalarField.from_function(g, lambda x1, x2: np.cos(x2))
        geom = geometry_from_theta(th)
        assert region_B(geom, 10.0).area == 0.0

    def test_region_b_bump_ring_radius(self, bump256):
        # |grad xi| = 1/r on circles: threshold 5 -> disc of radius 0.2.
        # eps_rel masks the inter-image saddles where the tail gradient
        # is negligible but the direction field still varies fast.
        geom = geometry_from_theta(bump256, eps_rel=1e-3)
        mask = region_B(geom, 5.0)
        measured_r = np.sqrt(mask.area / np.pi)
        assert abs(measured_r - 0.2) < 0.1 * 0.2

    def test_overlap_stats(self):
        g = sq.Grid(32)
        a = np.zeros((32, 32), bool)
        b = np.zeros((32, 32), bool)
        a[:8] = True
        b[16:] = True
        ra, rb = sq.RegionMask(g, a), sq.RegionMask(g, b)
        assert overlap_stats(ra, rb)[3] == 0.0
        assert overlap_stats(ra, ra)[3] == 1.0
        with pytest.raises(GridMismatch):
            overlap_stats(ra, sq.RegionMask(sq.Grid(64), np.zeros((64, 64), bool)))


class TestContours:
    def test_horizontal_lines(self):
        n = 64
        g = sq.Grid(n)
        th = sq.ScalarField.from_function(g, lambda x1, x2: np.cos(x2))
        contour = extract_contour(th, 0.0)
        assert len(contour.polylines) == 2
        lengths = sorted(
            polyline_length(p, closed=c)
            for p, c in zip(contour.polylines, contour.closed)
        )
        for L in lengths:
            assert abs(L - 2 * np.pi) < 1e-6
        rows = sorted(float(np.mean(p[:, 1])) for p in contour.polylines)
        assert abs(rows[0] - np.pi / 2) < 1e-3
        assert abs(rows[1] - 3 * np.pi / 2) < 1e-3
        assert all(contour.closed)

    def test_circle_length(self, bump256):
        r = 0.8
        level = float(np.exp(-(r**2) / (2 * 0.5**2)))
        contour = extract_contour(bump256, level)
        best = max(
            (polyline_length(p, closed=c)
             for p, c in zip(contour.polylines, contour.closed)),
        )
        assert abs(best - 2 * np.pi * r) < 0.01 * 2 * np.pi * r

    def test_level_outside_range(self, bump256):
        with pytest.raises(EmptyContour):
            extract_contour(bump256, 2.0)
        with pytest.raises(EmptyContour):
            extract_contour(bump256, -0.5)

    def test_vertex_spacing_below_two_cells(self, bump256):
        contour = extract_contour(bump256, 0.5)
        h = bump256.grid.h
        for pts in contour.polylines:
            if len(pts) < 2:
                continue
            from sqgtrack.geometry import wrap_delta
            seg = wrap_delta(np.diff(pts, axis=0))
            assert np.hypot(seg[:, 0], seg[:, 1]).max() < 2 * h

    def test_arc_through_point(self, bump256):
        r = 0.8
        level = float(np.exp(-(r**2) / (2 * 0.5**2)))
        contour = extract_contour(bump256, level)
        arc = arc_through_point(contour, (np.pi + r, np.pi), 1.0,
                                spacing=bump256.grid.h / 2)
        assert polyline_length(arc) == pytest.approx(1.0, rel=1e-3)
        radii = np.hypot(arc[:, 0] - np.pi, arc[:, 1] - np.pi)
        assert np.abs(radii - r).max() < 0.01


class TestExpIntegral:
    def test_same_point(self, bump256):
        geom = geometry_from_theta(bump256, eps_rel=1e-6)
        r = 0.8
        level = float(np.exp(-(r**2) / (2 * 0.5**2)))
        contour = extract_contour(bump256, level)
        x = (np.pi + r, np.pi)
        predicted = exp_integral_along(contour, geom, x, x)
        probe = FieldProbe(bump256)
        assert predicted == pytest.approx(float(probe.magnitude(np.array([x]))[0]), rel=1e-6)

    def test_circle_zero_divergence(self, bump256):
        geom = geometry_from_theta(bump256, eps_rel=1e-6)
        r = 0.8
        level = float(np.exp(-(r**2) / (2 * 0.5**2)))
        contour = extract_contour(bump256, level)
        x = (np.pi + r, np.pi)
        y = (np.pi, np.pi + r)
        predicted = exp_integral_along(contour, geom, x, y)
        probe = FieldProbe(bump256)
        measured = float(probe.magnitude(np.array([y]))[0])
        assert predicted == pytest.approx(measured, rel=1e-4)

    def test_cmt_self_consistency(self):
        g = sq.Grid(256)
        th = cmt_field(g)
        geom = geometry_from_theta(th)
        from sqgtrack.tracking import seed_arc_from_snapshot
        arc, level, center = seed_arc_from_snapshot(th, 1.0)
        contour = extract_contour(th, level)
        x, y = arc[0], arc[-1]
        predicted = exp_integral_along(contour, geom, x, y)
        probe = FieldProbe(th)
        measured = float(probe.magnitude(np.array([y]))[0])
        assert predicted == pytest.approx(measured, rel=0.02)


class TestSegmentQuantities:
    def test_straight_chain(self):
        g = sq.Grid(128)
        th = sq.ScalarField.from_function(g, lambda x1, x2: np.cos(x2))
        # level line x2 = pi/2: u = (-sin x2, 0) = (-1, 0) along it
        xs = np.linspace(1.0, 2.0, 16)
        chain = np.stack([xs, np.full_like(xs, np.pi / 2)], axis=-1)
        state = segment_quantities(chain, th)
        assert state.k < 1e-9
        assert state.m < 1e-9
        assert state.l == pytest.approx(1.0, abs=1e-12)
        assert state.u_xi < 1e-9
        assert state.u_n < 1e-9
        assert state.omega_l == pytest.approx(1.0, rel=1e-9)

    def test_bump_circle_chain(self, bump256):
        r = 0.8
        ang = np.linspace(0, 1.0, 24)
        chain = np.stack([np.pi + r * np.cos(ang), np.pi + r * np.sin(ang)], axis=-1)
        state = segment_quantities(chain, bump256)
        assert state.k == pytest.approx(1.25, rel=0.01)
        assert state.m < 1e-6
