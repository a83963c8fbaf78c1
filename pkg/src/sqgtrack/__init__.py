"""Pseudo-spectral 2D quasi-geostrophic solver with level-set geometry
diagnostics, Lagrangian front tracking, and growth-bound certification."""

from .spectral import (
    Grid,
    ScalarField,
    VectorField,
    dealias_two_thirds,
    forward_transform,
    inverse_transform,
    invert_half_laplacian,
    perp_gradient,
    spectral_derivative,
    velocity_from_theta,
)
from .solver import NonFinite, SolverConfig, SolverState, cfl_dt, rhs, rk4_step, run
from .geometry import (
    Contour,
    DegenerateField,
    EmptyContour,
    GeometryFields,
    GridMismatch,
    MaskCrossing,
    RegionMask,
    check_div_identity,
    exp_integral_along,
    extract_contour,
    geometry_from_theta,
    overlap_stats,
    region_A,
    region_B,
    segment_quantities,
)
from .tracking import (
    ChainTooShort,
    MarkerChain,
    SnapshotVelocityProvider,
    VelocityRangeError,
    advect,
    cauchy_check,
    flow_map_jacobian_det,
    seed_chain,
    stretching_inequality_check,
    track_segment,
)
from .interpolate import interpolate
from .bounds import (
    AlignmentGap,
    BoundParams,
    NotMonotone,
    Partition,
    RatioTooSmall,
    WindowEmpty,
    bkm_monitor,
    build_partition,
    cordoba_fit,
    growth_classifier,
    hypothesis_monitor,
    key_estimate_check,
    replay_double,
    replay_triple,
)
from .series import GlobalSeries, SegmentSeries, SegmentState

__version__ = "0.1.0"
