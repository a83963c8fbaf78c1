"""Gradient-growth diagnostics and bound certification.

Pure post-processing on immutable global/segment series: the velocity
log bound, hypothesis monitoring for the tracked segment, the geometric
ratio partition of time, the segment growth estimate, and numerical
replays of the interval recursions that certify double- or
triple-exponential gradient growth.

All asserted constants are the minimal data-consistent values; nothing
is assumed from theory beyond the arithmetic that is checked here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .series import GlobalSeries, SegmentSeries

E = math.e
MONOTONE_TOL = 1e-9


class WindowEmpty(Exception):
    """No samples satisfy the window/guard conditions."""


class AlignmentGap(Exception):
    """Segment and global series times differ by more than one stride."""


class NotMonotone(Exception):
    """The gradient sup norm decreases on the requested window."""


class RatioTooSmall(Exception):
    """Partition ratio r does not exceed the hypothesis threshold R."""


class AdmissibilityError(Exception):
    """The window start violates the replay admissibility precondition."""


# ---------------------------------------------------------------------------
# velocity log bound


@dataclass
class CordobaFit:
    c: float
    times: np.ndarray
    ratios: np.ndarray


def cordoba_fit(glob: GlobalSeries) -> CordobaFit:
    """Smallest C with u_max <= C log(omega) on the window omega > e."""
    mask = glob.omega > E
    if not mask.any():
        raise WindowEmpty("no samples with omega > e")
    ratios = glob.u_max[mask] / np.log(glob.omega[mask])
    return CordobaFit(float(ratios.max()), glob.t[mask], ratios)


# ---------------------------------------------------------------------------
# hypothesis monitoring


@dataclass
class BoundParams:
    """Hypothesis constants measured (or chosen) for one segment window.

    R = exp(C0) / c0 is the threshold the partition ratio must exceed.
    """

    c0: float
    C0: float
    cL: float
    r: float = None

    def __post_init__(self):
        if not 0.0 < self.c0 <= 1.0 + 1e-12:
            raise ValueError(f"c0 must lie in (0, 1], got {self.c0}")
        if self.C0 < 0.0:
            raise ValueError("C0 must be nonnegative")
        if self.cL <= 0.0:
            raise ValueError("cL must be positive")

    @property
    def R(self) -> float:
        return math.exp(self.C0) / self.c0


def align_series(seg_t, glob_t):
    """Nearest-global-sample index per segment sample.

    Raises AlignmentGap when any nearest sample is more than one global
    stride away.
    """
    seg_t = np.asarray(seg_t, dtype=float)
    glob_t = np.asarray(glob_t, dtype=float)
    stride = float(np.median(np.diff(glob_t))) if len(glob_t) > 1 else np.inf
    pos = np.searchsorted(glob_t, seg_t)
    pos = np.clip(pos, 1, len(glob_t) - 1)
    left, right = glob_t[pos - 1], glob_t[pos]
    idx = np.where(np.abs(seg_t - left) <= np.abs(right - seg_t), pos - 1, pos)
    gap = np.abs(glob_t[idx] - seg_t)
    if np.any(gap > stride + 1e-12):
        worst = float(gap.max())
        raise AlignmentGap(f"series misaligned by {worst:.3g} (> one stride {stride:.3g})")
    return idx


@dataclass
class HypothesisReport:
    params: BoundParams
    times: np.ndarray
    length: np.ndarray            # L(t)
    length_times_loglog: np.ndarray
    ml: np.ndarray                # M(t) L(t)
    kl: np.ndarray                # K(t) L(t)
    omega_ratio: np.ndarray       # Omega_L / Omega
    n_excluded_loglog: int


def hypothesis_monitor(seg: SegmentSeries, glob: GlobalSeries, r: float = None) -> HypothesisReport:
    """Measured hypothesis quantities and their window aggregates.

    The log-log factor is evaluated only where omega > e; excluded
    samples are counted, not dropped from the other diagnostics.
    """
    idx = align_series(seg.t, glob.t)
    omega = glob.omega[idx]
    with np.errstate(invalid="ignore", divide="ignore"):
        ll = np.where(omega > E, np.log(np.log(np.maximum(omega, 1.0 + 1e-300))), np.nan)
        omega_ratio = np.where(omega > 0, seg.omega_l / omega, np.nan)
    ml = seg.m * seg.l
    kl = seg.k * seg.l
    c0 = float(np.nanmin(omega_ratio))
    params = BoundParams(
        c0=min(c0, 1.0),
        C0=float(max(ml.max(), kl.max())),
        cL=float(seg.l.min()),
        r=r,
    )
    return HypothesisReport(
        params=params,
        times=seg.t,
        length=seg.l,
        length_times_loglog=seg.l * ll,
        ml=ml,
        kl=kl,
        omega_ratio=omega_ratio,
        n_excluded_loglog=int(np.sum(~(omega > E))),
    )


# ---------------------------------------------------------------------------
# geometric ratio partition


@dataclass
class Partition:
    times: np.ndarray   # t_k with omega(t_{k+1}) / omega(t_k) = r
    omegas: np.ndarray
    r: float

    @property
    def n_intervals(self) -> int:
        return max(0, len(self.times) - 1)


def build_partition(glob: GlobalSeries, r: float, t_start: float) -> Partition:
    """Times t_k with a fixed omega ratio r, by log-omega interpolation."""
    if r <= 1.0:
        raise ValueError("partition ratio must exceed 1")
    sel = glob.t >= t_start - 1e-12
    if sel.sum() < 2:
        raise WindowEmpty(f"fewer than two samples at t >= {t_start}")
    t = glob.t[sel]
    om = glob.omega[sel]
    if np.any(om <= 0):
        raise WindowEmpty("omega must be positive on the partition window")
    drops = np.diff(om) / np.maximum(om[:-1], 1e-300)
    if np.any(drops < -MONOTONE_TOL):
        worst = float(drops.min())
        t_bad = float(t[1:][drops < -MONOTONE_TOL][0])
        raise NotMonotone(f"omega decreases by {-worst:.3g} (rel) near t = {t_bad:.6g}")
    log_om = np.maximum.accumulate(np.log(om))  # flatten sub-tolerance dips
    log_r = math.log(r)
    start = float(np.interp(t_start, t, log_om)) if t_start > t[0] else float(log_om[0])
    t0 = max(t_start, float(t[0]))
    times = [t0]
    omegas = [math.exp(start)]
    k = 1
    while start + k * log_r <= log_om[-1] + 1e-12:
        tk = float(np.interp(start + k * log_r, log_om, t))
        times.append(tk)
        omegas.append(math.exp(start + k * log_r))
        k += 1
    return Partition(np.asarray(times), np.asarray(omegas), float(r))


# ---------------------------------------------------------------------------
# segment growth estimate


@dataclass
class KeyEstimate:
    holds: bool
    slack: float    # RHS / LHS
    lhs: float
    rhs: float
    t0: float
    t1: float


def _window_interp(times, t0, t1, *arrays):
    """Samples inside [t0, t1] with linearly interpolated endpoints."""
    times = np.asarray(times, dtype=float)
    inner = (times > t0 + 1e-12) & (times < t1 - 1e-12)
    tt = np.concatenate([[t0], times[inner], [t1]])
    outs = []
    for a in arrays:
        a = np.asarray(a, dtype=float)
        outs.append(np.concatenate([
            [np.interp(t0, times, a)], a[inner], [np.interp(t1, times, a)],
        ]))
    return (tt, *outs)


def key_estimate_check(seg: SegmentSeries, glob: GlobalSeries, t0: float, t1: float) -> KeyEstimate:
    """Exponential transport bound for the segment gradient maximum.

    Checks omega_l(t1) <= exp(m(t1) l(t1)) * omega_l(t0) *
    [1 + (2 / l(t0)) * int_{t0}^{t1} (1 + k l) U dtau] on measured data,
    trapezoid rule on the segment samples with U interpolated from the
    global series.
    """
    if not (seg.t[0] - 1e-9 <= t0 < t1 <= seg.t[-1] + 1e-9):
        raise ValueError("window not covered by the segment series")
    t0 = max(t0, float(seg.t[0]))
    t1 = min(t1, float(seg.t[-1]))
    tt, l, k, om_l, m_arr = _window_interp(seg.t, t0, t1, seg.l, seg.k, seg.omega_l, seg.m)
    u = np.interp(tt, glob.t, glob.u_max)
    integrand = (1.0 + k * l) * u
    integral = float(np.sum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(tt)))
    lhs = float(om_l[-1])
    rhs = float(math.exp(m_arr[-1] * l[-1]) * om_l[0] * (1.0 + 2.0 / l[0] * integral))
    slack = rhs / lhs if lhs > 0 else math.inf
    return KeyEstimate(bool(lhs <= rhs * (1 + 1e-12)), slack, lhs, rhs, t0, t1)


# ---------------------------------------------------------------------------
# recursion replays


def _iterated_log(x, depth):
    for _ in range(depth):
        x = np.log(x)
    return x


@dataclass
class RiemannCheck:
    """Integral-test bound on the partition sum.

    A left-endpoint sum of a decreasing integrand exceeds the plain
    integral, so the first term is split off before comparing; the
    reported excess is the constant that makes the uncorrected form an
    equality.
    """

    lhs_sum: float
    integral_bound: float
    first_term: float
    holds: bool
    c_equality: float


@dataclass
class ReplayResult:
    level: int                     # 2: loglog certificate, 3: logloglog
    c_star: float                  # minimal bracket-recursion constant
    c_local: float                 # minimal per-interval slope constant
    prefactor: float               # log r / (log r - log R)
    times: np.ndarray              # partition times
    measured: np.ndarray           # iterated log of omega at t_k (NaN if guarded)
    certified: np.ndarray
    dominates: bool
    riemann: RiemannCheck
    params: BoundParams
    n_intervals: int


def _replay(glob: GlobalSeries, partition: Partition, params: BoundParams, level: int) -> ReplayResult:
    r = partition.r
    R = params.R
    if partition.n_intervals > 0 and r <= R:
        raise RatioTooSmall(f"partition ratio r = {r:.6g} must exceed R = {R:.6g}")
    tk = partition.times
    om_k = partition.omegas
    log_r, log_R = math.log(r), math.log(R)

    if partition.n_intervals == 0:
        measured = _iterated_log(np.maximum(om_k, 1e-300), level + 1)
        rc = RiemannCheck(0.0, 0.0, 0.0, True, 0.0)
        return ReplayResult(level, 0.0, 0.0, 1.0, tk, measured, measured.copy(),
                            True, rc, params, 0)

    guard = E if level == 2 else E**E
    if om_k[0] <= guard:
        raise WindowEmpty(
            f"omega(t0) = {om_k[0]:.4g} below the level-{level} guard {guard:.4g}"
        )
    if level == 3:
        # admissibility: the ratio step must not double the loglog scale
        if math.log(math.log(r * om_k[0])) > 2.0 * math.log(math.log(om_k[0])) + 1e-12:
            raise AdmissibilityError(
                "loglog(r * omega(t0)) exceeds 2 loglog(omega(t0)); start later"
            )

    # minimal constant of the bracket recursion
    # omega(t_{k+1}) <= R omega(t_k) [1 + C A_k int (log omega + 1) dtau]
    c_star = 0.0
    for k in range(partition.n_intervals):
        tt, om = _window_interp(glob.t, tk[k], tk[k + 1], glob.omega)
        integrand = np.log(np.maximum(om, 1e-300)) + 1.0
        integral = float(np.sum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(tt)))
        a_k = (1.0 + params.C0) * R * r / params.cL * integral
        if level == 3:
            a_k *= math.log(math.log(om_k[k]))
        if a_k > 0:
            c_star = max(c_star, (r / R - 1.0) / a_k)

    # minimal per-interval slope constant of the local estimate
    # G(t_{k+1}) <= G(t_k) + C dt + log R / D_k, G the iterated log
    g = _iterated_log(om_k, level)        # log log (level 2) or logloglog (3)
    log_om = np.log(om_k)
    d_k = log_om if level == 2 else log_om * np.log(log_om)
    c_local = 0.0
    for k in range(partition.n_intervals):
        need = g[k + 1] - g[k] - log_R / d_k[k]
        c_local = max(c_local, need / (tk[k + 1] - tk[k]))
    c_local = max(c_local, 0.0)

    # integral-test bound on the partition sum (first term split off)
    terms = log_R / d_k[:-1]
    lhs_sum = float(terms.sum())
    integral_bound = (log_R / log_r) * (g[-1] - g[0])
    first = float(terms[0])
    rc = RiemannCheck(
        lhs_sum=lhs_sum,
        integral_bound=integral_bound,
        first_term=first,
        holds=bool(lhs_sum <= integral_bound + first + 1e-12),
        c_equality=float(lhs_sum - (log_R / log_r) * g[-1]),
    )

    # telescoping + the corrected sum bound give the linear certificate
    # G(t) <= G(t0) + prefactor * (c_local (t - t0) + first_term)
    prefactor = log_r / (log_r - log_R)
    certified = g[0] + prefactor * (c_local * (tk - tk[0]) + first)
    dominates = bool(np.all(g <= certified + 1e-9))
    return ReplayResult(level, c_star, c_local, prefactor, tk, g, certified,
                        dominates, rc, params, partition.n_intervals)


def replay_double(glob: GlobalSeries, partition: Partition, params: BoundParams) -> ReplayResult:
    """Certify a straight-line bound on loglog(omega) at partition times."""
    return _replay(glob, partition, params, level=2)


def replay_triple(glob: GlobalSeries, partition: Partition, params: BoundParams) -> ReplayResult:
    """As replay_double, one log deeper, with the loglog bracket factor."""
    return _replay(glob, partition, params, level=3)


# ---------------------------------------------------------------------------
# growth model classification


@dataclass
class ModelFit:
    slope: float
    intercept: float
    r2: float
    normalized_residual: float


@dataclass
class GrowthFit:
    loglog: ModelFit
    logloglog: ModelFit
    preferred: str          # "double" or "triple"
    n_samples: int
    window: tuple


def _linear_fit(t, y) -> ModelFit:
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    spread = float(np.sqrt(np.mean((y - y.mean()) ** 2)))
    rms = float(np.sqrt(np.mean(resid**2)))
    nres = rms / spread if spread > 0 else (0.0 if rms == 0 else math.inf)
    return ModelFit(float(slope), float(intercept), 1.0 - nres**2, nres)


def growth_classifier(glob: GlobalSeries, window) -> GrowthFit:
    """Linear fits of the twice- and thrice-iterated log of omega vs t.

    The better model (smaller normalized residual) indicates whether the
    growth looks double or triple exponential on the window.
    """
    t0, t1 = window
    mask = (glob.t >= t0) & (glob.t <= t1) & (glob.omega > E**E)
    if mask.sum() < 10:
        raise WindowEmpty(f"only {int(mask.sum())} usable samples in {window}")
    t = glob.t[mask]
    om = glob.omega[mask]
    fit2 = _linear_fit(t, np.log(np.log(om)))
    fit3 = _linear_fit(t, np.log(np.log(np.log(om))))
    preferred = "double" if fit2.normalized_residual <= fit3.normalized_residual else "triple"
    return GrowthFit(fit2, fit3, preferred, int(mask.sum()), (float(t0), float(t1)))


def bkm_monitor(glob: GlobalSeries) -> np.ndarray:
    """Running trapezoid integral of omega; finite iff no blowup yet."""
    out = np.zeros(len(glob.t))
    if len(glob.t) > 1:
        incr = 0.5 * (glob.omega[1:] + glob.omega[:-1]) * np.diff(glob.t)
        out[1:] = np.cumsum(incr)
    return out
