"""Level-set geometry of a transported scalar.

Everything derives from spectral derivatives of theta: the perpendicular
gradient, its unit direction field xi, the unsigned level-set curvature,
the divergence of xi, and the Frobenius norm of grad(xi).  Direction
quantities are only defined where the gradient is bounded away from
zero; off-mask entries are flagged with NaN, never silently zeroed.

The same pointwise algebra is reused on interpolated derivative values
so that curve-sampled quantities stay consistent with the grid fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from .interpolate import BicubicInterpolator
from .series import SegmentState
from .spectral import (
    Grid,
    ScalarField,
    VectorField,
    TWO_PI,
    forward_transform,
    half_spectrum_ops,
    inverse_transform,
    irfft2_norm,
    rfft2_norm,
    velocity_from_theta,
    _derivative_multiplier,
)

DEFAULT_EPS_REL = 1e-8
_CURVATURE_FLOOR = 1e-12


class DegenerateField(Exception):
    """The gradient vanishes everywhere; no direction field exists."""


class MaskCrossing(Exception):
    """A curve or marker left the region where xi is defined."""


class GridMismatch(Exception):
    """Operands live on different grids."""


class EmptyContour(Exception):
    """Requested level lies outside the field's range."""


def derivative_fields(theta: ScalarField):
    """First and second spectral derivatives (t1, t2, t11, t12, t22).

    Real-half-spectrum path; equivalent to repeated spectral_derivative
    calls on the full grid.
    """
    n = theta.grid.n
    ops = half_spectrum_ops(n)
    c = rfft2_norm(theta.values)
    return (
        irfft2_norm(c * ops.d1, n),
        irfft2_norm(c * ops.d2, n),
        irfft2_norm(c * ops.d11, n),
        irfft2_norm(c * ops.d12, n),
        irfft2_norm(c * ops.d22, n),
    )


def _xi_algebra(t1, t2, t11, t12, t22):
    """Pointwise direction-field quantities from theta derivatives.

    Works on arrays of any shape; divisions by the gradient magnitude
    are left unguarded, so callers must mask zero-gradient points.
    Returns a namespace with mag, xi1, xi2, kappa, div_xi, grad_xi,
    curv1, curv2 (the curvature vector xi . grad xi).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        v1, v2 = -t2, t1
        mag = np.hypot(v1, v2)
        xi1, xi2 = v1 / mag, v2 / mag
        # grad |grad theta| by the chain rule on exact derivatives
        gm1 = (t1 * t11 + t2 * t12) / mag
        gm2 = (t1 * t12 + t2 * t22) / mag
        div_xi = -(xi1 * gm1 + xi2 * gm2) / mag
        # quotient rule: d_j xi_i = (d_j v_i - xi_i * gm_j) / mag
        x11 = (-t12 - xi1 * gm1) / mag
        x12 = (-t22 - xi1 * gm2) / mag
        x21 = (t11 - xi2 * gm1) / mag
        x22 = (t12 - xi2 * gm2) / mag
        grad_xi = np.sqrt(x11 * x11 + x12 * x12 + x21 * x21 + x22 * x22)
        curv1 = xi1 * x11 + xi2 * x12
        curv2 = xi1 * x21 + xi2 * x22
        num = np.abs(t2 * t2 * t11 - 2.0 * t1 * t2 * t12 + t1 * t1 * t22)
        kappa = num / mag**3
    return SimpleNamespace(
        mag=mag, xi1=xi1, xi2=xi2, div_xi=div_xi, grad_xi=grad_xi,
        curv1=curv1, curv2=curv2, kappa=kappa,
    )


@dataclass
class GeometryFields:
    """Direction-field diagnostics on the grid.

    valid_mask marks where |grad_perp theta| >= eps_rel * its maximum;
    xi, normal, curvature, div_xi and grad_xi_norm are NaN off-mask.
    normal_fallback marks points where the curvature sits below the
    machine floor and the normal is the left perpendicular of xi.
    """

    grad_perp_theta: VectorField
    magnitude: ScalarField
    xi: VectorField
    normal: VectorField
    curvature: ScalarField
    div_xi: ScalarField
    grad_xi_norm: ScalarField
    valid_mask: np.ndarray
    normal_fallback: np.ndarray
    eps_rel: float
    max_magnitude: float
    _derivs: tuple = None  # cached theta derivatives for curve sampling

    @property
    def grid(self) -> Grid:
        return self.magnitude.grid


def geometry_from_theta(theta: ScalarField, eps_rel: float = DEFAULT_EPS_REL) -> GeometryFields:
    """All direction-field diagnostics of one snapshot."""
    if eps_rel <= 0:
        raise ValueError("eps_rel must be positive")
    g = theta.grid
    derivs = derivative_fields(theta)
    alg = _xi_algebra(*derivs)
    mmax = float(alg.mag.max())
    if mmax <= 0.0:
        raise DegenerateField("gradient vanishes identically")
    mask = alg.mag >= eps_rel * mmax
    if not mask.any():
        raise DegenerateField("no points above the gradient threshold")

    def masked(a):
        return np.where(mask, a, np.nan)

    kappa = masked(alg.kappa)
    fallback = mask & (alg.kappa < _CURVATURE_FLOOR)
    with np.errstate(divide="ignore", invalid="ignore"):
        n1 = np.where(fallback, -alg.xi2, alg.curv1 / alg.kappa)
        n2 = np.where(fallback, alg.xi1, alg.curv2 / alg.kappa)
    sf = lambda a: ScalarField(g, a)
    return GeometryFields(
        grad_perp_theta=VectorField(sf(-derivs[1]), sf(derivs[0])),
        magnitude=sf(alg.mag),
        xi=VectorField(sf(masked(alg.xi1)), sf(masked(alg.xi2))),
        normal=VectorField(sf(masked(n1)), sf(masked(n2))),
        curvature=sf(kappa),
        div_xi=sf(masked(alg.div_xi)),
        grad_xi_norm=sf(masked(alg.grad_xi)),
        valid_mask=mask,
        normal_fallback=fallback,
        eps_rel=eps_rel,
        max_magnitude=mmax,
        _derivs=derivs,
    )


def check_div_identity(geom: GeometryFields) -> float:
    """Residual of the along-curve transport identity for |grad_perp theta|.

    Compares the tangential derivative of the gradient magnitude, taken
    spectrally, against -(div xi) |grad_perp theta| from the chain-rule
    fields.  The magnitude itself has conical kinks at critical points,
    so the spectral derivative acts on its square (a smooth quadratic of
    theta derivatives); the residual then measures aliasing and
    resolution error only, never modeling error.
    """
    g = geom.grid
    n = g.n
    mag = geom.magnitude.values
    msq = ScalarField(g, mag * mag)
    c = forward_transform(msq)
    d1 = inverse_transform(c * _derivative_multiplier(n, 1, 1), g).values
    d2 = inverse_transform(c * _derivative_multiplier(n, 2, 1), g).values
    xi1 = geom.xi.x1_component.values
    xi2 = geom.xi.x2_component.values
    with np.errstate(invalid="ignore"):
        ds_mag = (xi1 * d1 + xi2 * d2) / (2.0 * mag)
        resid = np.abs(ds_mag + geom.div_xi.values * mag)
    worst = np.nanmax(np.where(geom.valid_mask, resid, np.nan))
    return float(worst / geom.max_magnitude**2)


# ---------------------------------------------------------------------------
# regions


@dataclass
class RegionMask:
    """Boolean membership grid with its cell-counted area."""

    grid: Grid
    member: np.ndarray

    @property
    def area(self) -> float:
        return float(self.member.sum()) * self.grid.h**2


def region_A(theta: ScalarField, fraction: float = 0.5) -> RegionMask:
    """Points where |grad_perp theta| >= fraction * its maximum."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    n = theta.grid.n
    g = theta.grid
    c = forward_transform(theta)
    t1 = inverse_transform(c * _derivative_multiplier(n, 1, 1), g).values
    t2 = inverse_transform(c * _derivative_multiplier(n, 2, 1), g).values
    mag = np.hypot(t1, t2)
    mmax = mag.max()
    if mmax <= 0.0:
        member = np.zeros_like(mag, dtype=bool)  # flat field: empty region
    else:
        member = mag >= fraction * mmax
    return RegionMask(g, member)


def region_B(geom: GeometryFields, threshold: float = 10.0) -> RegionMask:
    """Points on the valid mask where |grad xi| >= threshold."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    gx = geom.grad_xi_norm.values
    member = geom.valid_mask & (np.nan_to_num(gx, nan=0.0) >= threshold)
    return RegionMask(geom.grid, member)


def overlap_stats(a: RegionMask, b: RegionMask):
    """(area_a, area_b, area_intersection, frac = inter / min(a, b))."""
    if a.grid != b.grid:
        raise GridMismatch("region masks live on different grids")
    h2 = a.grid.h**2
    area_a = float(a.member.sum()) * h2
    area_b = float(b.member.sum()) * h2
    inter = float((a.member & b.member).sum()) * h2
    floor = min(area_a, area_b)
    frac = inter / floor if floor > 0 else 0.0
    return area_a, area_b, inter, frac


# ---------------------------------------------------------------------------
# contours (marching squares on the periodic grid)

# case index bits: 1 = v00, 2 = v10, 4 = v11, 8 = v01 ("inside" = value >= level)
# edges: 0 bottom (p00-p10), 1 right (p10-p11), 2 top (p01-p11), 3 left (p00-p01)
_CASE_SEGMENTS = {
    1: [(3, 0)], 2: [(0, 1)], 4: [(1, 2)], 8: [(2, 3)],
    3: [(3, 1)], 6: [(0, 2)], 12: [(3, 1)], 9: [(0, 2)],
    7: [(2, 3)], 11: [(1, 2)], 13: [(0, 1)], 14: [(0, 3)],
}
_SADDLE = {
    5: ([(0, 1), (2, 3)], [(0, 3), (1, 2)]),   # center inside, center outside
    10: ([(0, 3), (1, 2)], [(0, 1), (2, 3)]),
}


@dataclass
class Contour:
    """Iso-level polylines; vertices wrapped into [0, 2pi)."""

    polylines: list
    closed: list
    level: float


def wrap_delta(d):
    """Minimal-image displacement on the 2pi torus."""
    return (np.asarray(d) + np.pi) % TWO_PI - np.pi


def polyline_length(points, closed: bool = False) -> float:
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return 0.0
    segs = wrap_delta(np.diff(pts, axis=0))
    total = float(np.hypot(segs[:, 0], segs[:, 1]).sum())
    if closed:
        d = wrap_delta(pts[0] - pts[-1])
        total += float(np.hypot(d[0], d[1]))
    return total


def extract_contour(field: ScalarField, level: float) -> Contour:
    """Marching squares with linear edge interpolation, periodic wrap.

    Saddle cells are disambiguated by the cell-center average.  Vertices
    on a shared edge are computed once, so adjacent cells agree exactly
    and stitching into polylines is unambiguous.
    """
    v = field.values
    n = field.grid.n
    h = field.grid.h
    vmin, vmax = float(np.nanmin(v)), float(np.nanmax(v))
    if level < vmin or level > vmax:
        raise EmptyContour(f"level {level} outside field range [{vmin}, {vmax}]")

    inside = v >= level
    b00 = inside
    b10 = np.roll(inside, -1, axis=1)
    b01 = np.roll(inside, -1, axis=0)
    b11 = np.roll(b10, -1, axis=0)
    case = (b00 * 1 + b10 * 2 + b11 * 4 + b01 * 8).astype(np.int8)
    active = np.argwhere((case != 0) & (case != 15))
    if len(active) == 0:
        raise EmptyContour("no level crossings found")

    vr1 = np.roll(v, -1, axis=1)
    vr0 = np.roll(v, -1, axis=0)

    verts = {}

    def edge_point(kind, j, i):
        key = (kind, j, i)
        p = verts.get(key)
        if p is None:
            v0 = v[j, i]
            v1 = vr1[j, i] if kind == "h" else vr0[j, i]
            t = 0.0 if v1 == v0 else (level - v0) / (v1 - v0)
            t = min(1.0, max(0.0, t))
            if kind == "h":
                p = ((i + t) * h % TWO_PI, j * h)
            else:
                p = (i * h, (j + t) * h % TWO_PI)
            verts[key] = p
        return key, p

    def cell_edge(j, i, e):
        if e == 0:
            return edge_point("h", j, i)
        if e == 1:
            return edge_point("v", j, (i + 1) % n)
        if e == 2:
            return edge_point("h", (j + 1) % n, i)
        return edge_point("v", j, i)

    # nodes are keyed by exact position so crossings that land on a
    # shared corner (or a saddle junction) stay connected
    segments = []
    adjacency = {}
    for j, i in active:
        c = case[j, i]
        if c in _SADDLE:
            center = 0.25 * (v[j, i] + vr1[j, i] + vr0[j, i] + vr1[(j + 1) % n, i])
            segs = _SADDLE[c][0] if center >= level else _SADDLE[c][1]
        else:
            segs = _CASE_SEGMENTS[c]
        for ea, eb in segs:
            _, pa = cell_edge(j, i, ea)
            _, pb = cell_edge(j, i, eb)
            if pa == pb:
                continue  # zero-length crossing at a grid point
            sid = len(segments)
            segments.append((pa, pb))
            adjacency.setdefault(pa, []).append((sid, pb))
            adjacency.setdefault(pb, []).append((sid, pa))

    used = [False] * len(segments)

    def next_step(point):
        for sid, other in adjacency[point]:
            if not used[sid]:
                used[sid] = True
                return other
        return None

    polylines, closed_flags = [], []
    for sid, (pa, pb) in enumerate(segments):
        if used[sid]:
            continue
        used[sid] = True
        chain = [pa, pb]
        while True:  # grow forward until a dead end or a loop closes
            nxt = next_step(chain[-1])
            if nxt is None:
                break
            chain.append(nxt)
            if nxt == chain[0]:
                break
        closed = len(chain) > 3 and chain[-1] == chain[0]
        if closed:
            chain = chain[:-1]
        else:
            head = []
            while True:  # grow backward from the original start
                nxt = next_step(chain[0] if not head else head[-1])
                if nxt is None:
                    break
                head.append(nxt)
            if head:
                chain = list(reversed(head)) + chain
        polylines.append(np.array(chain))
        closed_flags.append(bool(closed))
    return Contour(polylines=polylines, closed=closed_flags, level=float(level))


def arc_through_point(contour: Contour, center, length: float, spacing: float):
    """Resampled sub-arc of the contour, centered at the vertex nearest
    ``center``, of total arc length ``length``.

    Walks the polyline both ways (wrapping if closed), unwraps periodic
    jumps, and resamples at uniform spacing.  Raises ValueError if the
    polyline cannot supply the requested length.
    """
    center = np.asarray(center, dtype=float)
    best = None
    for pi, pts in enumerate(contour.polylines):
        d = wrap_delta(pts - center)
        dist = np.hypot(d[:, 0], d[:, 1])
        j = int(np.argmin(dist))
        if best is None or dist[j] < best[0]:
            best = (float(dist[j]), pi, j)
    if best is None:
        raise ValueError("contour has no polylines")
    _, pi, j0 = best
    pts = contour.polylines[pi]
    closed = contour.closed[pi]
    m = len(pts)

    def walk(direction):
        # unwrapped positions outward from the center vertex
        out = []
        pos = pts[j0].astype(float).copy()
        acc = 0.0
        idx = j0
        steps = 0
        while acc < length / 2 and steps < 2 * m:
            nxt = idx + direction
            if closed:
                nxt %= m
            elif nxt < 0 or nxt >= m:
                break
            d = wrap_delta(pts[nxt] - pts[idx])
            seg = float(np.hypot(d[0], d[1]))
            if seg > 0:
                pos = pos + d
                acc += seg
                out.append((acc, pos.copy()))
            idx = nxt
            steps += 1
        return out

    fwd = walk(+1)
    bwd = walk(-1)
    if not fwd or fwd[-1][0] < length / 2 or not bwd or bwd[-1][0] < length / 2:
        raise ValueError(
            f"contour polyline too short for a length-{length} arc"
        )
    anchor = pts[j0].astype(float)
    s_vals = [-s for s, _ in reversed(bwd)] + [0.0] + [s for s, _ in fwd]
    p_vals = [p for _, p in reversed(bwd)] + [anchor] + [p for _, p in fwd]
    s_vals = np.asarray(s_vals)
    p_vals = np.asarray(p_vals)
    target = np.linspace(-length / 2, length / 2, max(2, math.ceil(length / spacing) + 1))
    out = np.empty((len(target), 2))
    out[:, 0] = np.interp(target, s_vals, p_vals[:, 0])
    out[:, 1] = np.interp(target, s_vals, p_vals[:, 1])
    return out % TWO_PI


# ---------------------------------------------------------------------------
# curve-sampled quantities


class FieldProbe:
    """Interpolated theta derivatives and velocity of one snapshot.

    Direction quantities at arbitrary points are assembled from the
    interpolated smooth derivative fields, matching the grid algebra;
    the discontinuous xi field itself is never interpolated.
    """

    def __init__(self, theta: ScalarField, eps_rel: float = DEFAULT_EPS_REL):
        self.grid = theta.grid
        self.eps_rel = eps_rel
        derivs = derivative_fields(theta)
        self.max_magnitude = float(np.hypot(derivs[0], derivs[1]).max())
        self._interp = [BicubicInterpolator(ScalarField(theta.grid, d)) for d in derivs]
        u = velocity_from_theta(theta)
        self._u1 = BicubicInterpolator(u.x1_component)
        self._u2 = BicubicInterpolator(u.x2_component)
        self._theta = BicubicInterpolator(theta)

    def theta(self, points):
        return self._theta(points)

    def derivatives(self, points):
        return tuple(f(points) for f in self._interp)

    def direction_quantities(self, points):
        return _xi_algebra(*self.derivatives(points))

    def magnitude(self, points):
        t1, t2 = self._interp[0](points), self._interp[1](points)
        return np.hypot(t1, t2)

    def velocity(self, points):
        return np.stack([self._u1(points), self._u2(points)], axis=-1)

    def in_mask(self, points):
        return self.magnitude(points) >= self.eps_rel * self.max_magnitude


def segment_quantities(chain, theta: ScalarField, probe: FieldProbe = None,
                       eps_rel: float = DEFAULT_EPS_REL) -> SegmentState:
    """Arc length and extremal diagnostics along a marker chain.

    ``chain`` is anything with a ``positions`` attribute (or a plain
    (m, 2) array); ``theta`` is the snapshot the chain lives on.
    """
    pos = np.asarray(getattr(chain, "positions", chain), dtype=float)
    t_val = float(getattr(chain, "t_current", np.nan))
    if probe is None:
        probe = FieldProbe(theta, eps_rel)
    alg = probe.direction_quantities(pos)
    if np.any(alg.mag < probe.eps_rel * probe.max_magnitude):
        raise MaskCrossing("chain marker below the gradient threshold")
    u = probe.velocity(pos)
    u_xi_vals = u[:, 0] * alg.xi1 + u[:, 1] * alg.xi2
    # |u . n| is orientation-free, so the left perpendicular suffices
    u_n_vals = np.abs(u[:, 0] * (-alg.xi2) + u[:, 1] * alg.xi1)
    return SegmentState(
        t=t_val,
        l=polyline_length(pos),
        m=float(np.abs(alg.div_xi).max()),
        k=float(alg.kappa.max()),
        omega_l=float(alg.mag.max()),
        u_xi=float(u_xi_vals.max() - u_xi_vals.min()),
        u_n=float(u_n_vals.max()),
        n_markers=len(pos),
        u_xi_endpoints=float(abs(u_xi_vals[-1] - u_xi_vals[0])),
    )


def exp_integral_along(contour: Contour, geom: GeometryFields, x, y,
                       probe: FieldProbe = None):
    """Predicted |grad_perp theta| at y from its value at x.

    Integrates -div(xi) along the contour arc between the vertices
    nearest x and y (trapezoid rule, the shorter way around on closed
    polylines) and applies the exponential transport factor.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    h = geom.grid.h
    best = None
    for pi, pts in enumerate(contour.polylines):
        d = wrap_delta(pts - x)
        dist = np.hypot(d[:, 0], d[:, 1])
        j = int(np.argmin(dist))
        if best is None or dist[j] < best[0]:
            best = (float(dist[j]), pi, j)
    dist_x, pi, ix = best
    pts = contour.polylines[pi]
    d = wrap_delta(pts - y)
    dist = np.hypot(d[:, 0], d[:, 1])
    iy = int(np.argmin(dist))
    if dist_x > 2 * h or dist[iy] > 2 * h:
        raise ValueError("x and y must both lie on one contour polyline")

    if contour.closed[pi]:
        m = len(pts)
        fwd = [k % m for k in range(ix, ix + (iy - ix) % m + 1)]
        bwd = [k % m for k in range(ix, ix - (ix - iy) % m - 1, -1)]
        arc_f = polyline_length(pts[fwd])
        arc_b = polyline_length(pts[bwd])
        idx = fwd if arc_f <= arc_b else bwd
    else:
        idx = list(range(ix, iy + 1)) if iy >= ix else list(range(ix, iy - 1, -1))
    arc = pts[idx].copy()
    # evaluate at the exact query points, not their vertex snaps
    arc[0] = x
    arc[-1] = y

    if probe is None:
        if geom._derivs is None:
            raise ValueError("geometry was built without cached derivatives")
        probe = _probe_from_geom(geom)
    alg = probe.direction_quantities(arc)
    if np.any(alg.mag < geom.eps_rel * geom.max_magnitude):
        raise MaskCrossing("arc leaves the valid mask")
    if len(arc) < 2:
        return float(alg.mag[0])
    seg = wrap_delta(np.diff(arc, axis=0))
    ds = np.hypot(seg[:, 0], seg[:, 1])
    integrand = -alg.div_xi
    integral = float(np.sum(0.5 * (integrand[:-1] + integrand[1:]) * ds))
    return float(alg.mag[0] * np.exp(integral))


def _probe_from_geom(geom: GeometryFields) -> FieldProbe:
    probe = FieldProbe.__new__(FieldProbe)
    probe.grid = geom.grid
    probe.eps_rel = geom.eps_rel
    probe.max_magnitude = geom.max_magnitude
    probe._interp = [
        BicubicInterpolator(ScalarField(geom.grid, d)) for d in geom._derivs
    ]
    probe._u1 = probe._u2 = probe._theta = None
    return probe
