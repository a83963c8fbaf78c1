"""Point evaluation of gridded periodic fields.

Two interpolators: a periodic interpolating bicubic spline (the working
path, exact at grid nodes) and an exact trigonometric sum used to
cross-validate it in tests.  Points are (m, 2) arrays with columns
(x1, x2); everything wraps periodically.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .spectral import ScalarField, VectorField, forward_transform, wavenumbers


class BicubicInterpolator:
    """Periodic interpolating cubic spline over one scalar field.

    The spline prefilter is computed once at construction; instances are
    immutable afterwards and safe for concurrent reads.
    """

    def __init__(self, field: ScalarField):
        self.grid = field.grid
        self._coeffs = ndimage.spline_filter(field.values, order=3, mode="grid-wrap")

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        coords = np.empty((2, pts.shape[0]))
        coords[0] = pts[:, 1] / self.grid.h  # x2 -> row index
        coords[1] = pts[:, 0] / self.grid.h  # x1 -> column index
        out = ndimage.map_coordinates(
            self._coeffs, coords, order=3, mode="grid-wrap", prefilter=False
        )
        return out if np.ndim(points) > 1 else float(out[0])


def fourier_interpolate(field: ScalarField, points) -> np.ndarray:
    """Exact trigonometric evaluation; O(n^2) per point, test use only."""
    c = forward_transform(field)
    k1, k2 = wavenumbers(field.grid.n)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(pts.shape[0])
    for i, (x1, x2) in enumerate(pts):
        out[i] = np.real(np.sum(c * np.exp(1j * (k1 * x1 + k2 * x2))))
    return out if np.ndim(points) > 1 else float(out[0])


def interpolate(field, points, method: str = "bicubic"):
    """Evaluate a ScalarField or VectorField at arbitrary points."""
    if isinstance(field, VectorField):
        v1 = interpolate(field.x1_component, points, method)
        v2 = interpolate(field.x2_component, points, method)
        return np.stack([np.atleast_1d(v1), np.atleast_1d(v2)], axis=-1)
    if method == "bicubic":
        return BicubicInterpolator(field)(points)
    if method == "fourier":
        return fourier_interpolate(field, points)
    raise ValueError(f"unknown interpolation method {method!r}")
