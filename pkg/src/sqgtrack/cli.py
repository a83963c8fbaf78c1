"""Command-line workflow: simulate -> diagnose -> trace -> verify -> report.

Exit codes: 0 success, 1 input/config errors, 2 non-finite blowup during
simulation, 3 structural diagnostic errors (degenerate fields, mask
crossings, misaligned or non-monotone series, inadmissible replay
parameters), 4 a theorem inequality check failed on the data.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import bounds
from .config import ConfigError, RunConfig, initial_field, parse_config, snapshot_times
from .geometry import (
    DegenerateField,
    MaskCrossing,
    extract_contour,
    geometry_from_theta,
    overlap_stats,
    region_A,
    region_B,
)
from .interpolate import BicubicInterpolator
from .series import GlobalSeries, SegmentSeries, SeriesFormatError
from .snapshots import (
    FormatError,
    list_snapshots,
    read_snapshot,
    snapshot_name,
    write_mask,
    write_snapshot,
)
from .solver import NonFinite, SolverConfig, run
from .spectral import Grid, ScalarField
from .tracking import (
    ChainTooShort,
    SnapshotVelocityProvider,
    VelocityRangeError,
    seed_arc_from_snapshot,
    track_segment,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NONFINITE = 2
EXIT_DIAGNOSTIC = 3
EXIT_INEQUALITY = 4


def _apply_thread_env():
    threads = os.environ.get("SQG_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def _write_contour_csv(path, contour):
    lines = ["polyline_id,vertex_index,x1,x2"]
    for pid, pts in enumerate(contour.polylines):
        for vi, (x1, x2) in enumerate(pts):
            lines.append(f"{pid},{vi},{x1!r},{x2!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _write_chain_csv(path, chain):
    lines = ["polyline_id,vertex_index,x1,x2"]
    for vi, (x1, x2) in enumerate(chain.positions):
        lines.append(f"0,{vi},{x1!r},{x2!r}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = Grid(cfg.n)
    try:
        theta0 = initial_field(cfg.initial, grid)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    solver_cfg = SolverConfig(
        grid_n=cfg.n,
        t_end=cfg.t_end,
        cfl_safety=cfg.cfl_safety,
        dt_max=cfg.dt_max,
        snapshot_times=snapshot_times(cfg),
        series_stride=cfg.series_stride,
        region_fraction=cfg.region_fraction,
        grad_xi_threshold=cfg.grad_xi_threshold,
    )

    def emit(t, theta):
        write_snapshot(out_dir, snapshot_name("theta", t), theta, t)

    (out_dir / "resolved_config.txt").write_text(
        "".join(f"{k} = {getattr(cfg, k)}\n" for k in vars(cfg))
    )
    try:
        _, series = run(solver_cfg, theta0, snapshot_callback=emit)
    except NonFinite as exc:
        print(f"simulation blew up: {exc}", file=sys.stderr)
        if exc.state is not None:
            write_snapshot(out_dir, snapshot_name("theta", exc.state.t),
                           exc.state.theta, exc.state.t)
        if getattr(exc, "series", None) is not None:
            exc.series.to_csv(out_dir / "global_series.csv")
        return EXIT_NONFINITE
    series.to_csv(out_dir / "global_series.csv")
    print(f"wrote {out_dir}/global_series.csv "
          f"({len(series)} samples, {len(solver_cfg.snapshot_times)} snapshots)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# diagnose


def cmd_diagnose(args) -> int:
    try:
        theta, t = read_snapshot(args.snapshot)
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.snapshot).parent
    tag = f"t{t:010.6f}"
    try:
        geom = geometry_from_theta(theta)
    except DegenerateField as exc:
        print(f"degenerate field: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC
    mask_a = region_A(theta, args.fraction)
    mask_b = region_B(geom, args.threshold)
    area_a, area_b, inter, frac = overlap_stats(mask_a, mask_b)
    write_mask(out_dir / f"mask_A_{tag}.rle", mask_a)
    write_mask(out_dir / f"mask_B_{tag}.rle", mask_b)

    mag = geom.magnitude.values
    try:
        _write_contour_csv(out_dir / f"contours_A_{tag}.csv",
                           extract_contour(geom.magnitude, args.fraction * mag.max()))
    except Exception:
        Path(out_dir / f"contours_A_{tag}.csv").write_text("polyline_id,vertex_index,x1,x2\n")
    gx_field = ScalarField(theta.grid, np.nan_to_num(geom.grad_xi_norm.values, nan=0.0))
    try:
        _write_contour_csv(out_dir / f"contours_B_{tag}.csv",
                           extract_contour(gx_field, args.threshold))
    except Exception:
        Path(out_dir / f"contours_B_{tag}.csv").write_text("polyline_id,vertex_index,x1,x2\n")

    write_snapshot(out_dir, f"kappa_{tag}", geom.curvature, t)
    write_snapshot(out_dir, f"div_xi_{tag}", geom.div_xi, t)
    write_snapshot(out_dir, f"grad_xi_{tag}", geom.grad_xi_norm, t)
    stats = (f"t={t!r} area_A={area_a!r} area_B={area_b!r} "
             f"area_intersection={inter!r} overlap_frac={frac!r}")
    (out_dir / f"diagnose_stats_{tag}.txt").write_text(stats + "\n")
    print(stats)
    return EXIT_OK


# ---------------------------------------------------------------------------
# trace


def _load_run(run_dir):
    snaps = list_snapshots(run_dir, "theta")
    if not snaps:
        raise FileNotFoundError(f"no theta snapshots in {run_dir}")
    times, thetas = [], []
    for t, meta in snaps:
        theta, t_meta = read_snapshot(meta)
        times.append(t_meta)
        thetas.append(theta)
    return np.asarray(times), thetas


def cmd_trace(args) -> int:
    run_dir = Path(args.run_dir)
    try:
        times, thetas = _load_run(run_dir)
    except (FileNotFoundError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = args.seed_time
    t1 = args.until if args.until is not None else float(times[-1])
    if t0 < times[0] - 1e-9 or t1 > times[-1] + 1e-9 or t1 < t0:
        print(f"error: window [{t0}, {t1}] outside stored snapshots "
              f"[{times[0]}, {times[-1]}]", file=sys.stderr)
        return EXIT_CONFIG
    idx0 = int(np.argmin(np.abs(times - t0)))
    if abs(times[idx0] - t0) > 1e-9:
        print(f"error: no snapshot at seed time {t0}", file=sys.stderr)
        return EXIT_CONFIG
    track_idx = [i for i, t in enumerate(times) if t0 - 1e-9 <= t <= t1 + 1e-9]
    snapshots = {float(times[i]): thetas[i] for i in track_idx}
    vp = SnapshotVelocityProvider([times[i] for i in track_idx],
                                  [thetas[i] for i in track_idx])
    try:
        seed_pts, level, center = seed_arc_from_snapshot(
            thetas[idx0], args.seed_length)
        series, chains = track_segment(
            seed_pts, float(times[idx0]), [float(times[i]) for i in track_idx],
            vp, snapshots)
    except (MaskCrossing, ChainTooShort, VelocityRangeError, ValueError) as exc:
        print(f"tracking failed: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC
    series.to_csv(run_dir / "segment_series.csv")
    chains_dir = run_dir / "chains"
    chains_dir.mkdir(exist_ok=True)
    for t, chain in chains.items():
        _write_chain_csv(chains_dir / f"chain_t{t:010.6f}.csv", chain)
    print(f"tracked {len(series)} times, seed level {level!r} at "
          f"({center[0]:.4f}, {center[1]:.4f}); wrote segment_series.csv")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def _fmt_val(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def cmd_verify(args) -> int:
    run_dir = Path(args.run_dir)
    try:
        glob = GlobalSeries.from_csv(run_dir / "global_series.csv")
        seg = SegmentSeries.from_csv(run_dir / "segment_series.csv")
    except (OSError, SeriesFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    r = args.r
    if r is None:
        cfg_path = run_dir / "resolved_config.txt"
        r = 2.0
        if cfg_path.exists():
            for line in cfg_path.read_text().splitlines():
                if line.startswith("partition_r"):
                    r = float(line.partition("=")[2])
    t_start = args.t_start
    if t_start is None:
        above = glob.t[glob.omega > 10.0 * max(glob.omega[0], 1e-300)]
        t_start = float(above[0]) if len(above) else float(glob.t[0])

    sections = []
    failed_inequality = False

    try:
        fit = bounds.cordoba_fit(glob)
        sections.append(("cordoba_fit", {
            "C": fit.c, "window_samples": len(fit.times),
        }))
    except bounds.WindowEmpty as exc:
        sections.append(("cordoba_fit", {"window_empty": True, "note": str(exc)}))

    try:
        monitor = bounds.hypothesis_monitor(seg, glob, r=r)
    except bounds.AlignmentGap as exc:
        print(f"alignment error: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC
    params = monitor.params
    sections.append(("hypothesis_monitor", {
        "c0": params.c0, "C0": params.C0, "cL": params.cL, "R": params.R,
        "max_ML": float(monitor.ml.max()), "max_KL": float(monitor.kl.max()),
        "excluded_loglog": monitor.n_excluded_loglog,
    }))

    try:
        partition = bounds.build_partition(glob, r, t_start)
    except (bounds.NotMonotone, bounds.WindowEmpty) as exc:
        _write_report(run_dir, sections)
        print(f"partition error: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC
    sections.append(("build_partition", {
        "r": r, "t_start": t_start, "n_intervals": partition.n_intervals,
        "t_k": " ".join(f"{t:.6f}" for t in partition.times),
    }))

    key_section = {}
    n_skipped = 0
    for k in range(partition.n_intervals):
        a, b = partition.times[k], partition.times[k + 1]
        lo, hi = max(a, seg.t[0]), min(b, seg.t[-1])
        if hi - lo < 1e-9:
            n_skipped += 1
            key_section[f"interval_{k}"] = "skipped (outside segment coverage)"
            continue
        est = bounds.key_estimate_check(seg, glob, lo, hi)
        if not est.holds:
            failed_inequality = True
        key_section[f"interval_{k}"] = (
            f"holds={_fmt_val(est.holds)} slack={est.slack!r} "
            f"window=[{est.t0:.6f}, {est.t1:.6f}]"
        )
    key_section["n_skipped"] = n_skipped
    sections.append(("key_estimate_check", key_section))

    replays = {}
    for name, fn in (("replay_double", bounds.replay_double),
                     ("replay_triple", bounds.replay_triple)):
        try:
            res = fn(glob, partition, params)
        except (bounds.RatioTooSmall, bounds.WindowEmpty,
                bounds.AdmissibilityError) as exc:
            _write_report(run_dir, sections)
            print(f"{name} error: {exc}", file=sys.stderr)
            return EXIT_DIAGNOSTIC
        replays[name] = res
        if not (res.dominates and res.riemann.holds):
            failed_inequality = True
        sections.append((name, {
            "c_star": res.c_star, "c_local": res.c_local,
            "prefactor": res.prefactor, "dominates": res.dominates,
            "riemann_holds": res.riemann.holds,
            "riemann_sum": res.riemann.lhs_sum,
            "riemann_bound_plus_first": res.riemann.integral_bound + res.riemann.first_term,
            "c_equality": res.riemann.c_equality,
            "n_intervals": res.n_intervals,
        }))

    try:
        fit = bounds.growth_classifier(glob, (t_start, float(glob.t[-1])))
        sections.append(("growth_classifier", {
            "loglog_slope": fit.loglog.slope, "loglog_r2": fit.loglog.r2,
            "logloglog_slope": fit.logloglog.slope,
            "logloglog_r2": fit.logloglog.r2,
            "preferred": fit.preferred, "n_samples": fit.n_samples,
        }))
    except bounds.WindowEmpty as exc:
        sections.append(("growth_classifier", {"window_empty": True, "note": str(exc)}))

    sections.append(("bkm_monitor", {"final": float(bounds.bkm_monitor(glob)[-1])}))
    _write_report(run_dir, sections)

    if replays:
        rd, rt = replays["replay_double"], replays["replay_triple"]
        lines = ["t,loglog_measured,loglog_certified,logloglog_measured,logloglog_certified"]
        for i, t in enumerate(rd.times):
            lines.append(",".join(repr(float(v)) for v in (
                t, rd.measured[i], rd.certified[i], rt.measured[i], rt.certified[i])))
        (run_dir / "certificates.csv").write_text("\n".join(lines) + "\n")

    print(f"wrote {run_dir}/report.txt")
    if failed_inequality:
        print("one or more inequality checks FAILED; see report.txt", file=sys.stderr)
        return EXIT_INEQUALITY
    return EXIT_OK


def _write_report(run_dir, sections):
    lines = []
    for name, kv in sections:
        lines.append(f"[{name}]")
        for key, val in kv.items():
            lines.append(f"{key} = {_fmt_val(val)}")
        lines.append("")
    Path(run_dir, "report.txt").write_text("\n".join(lines))


# ---------------------------------------------------------------------------
# report (figures)


def cmd_report(args) -> int:
    from . import figures

    run_dir = Path(args.run_dir)
    fig_dir = run_dir / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    wrote = []
    series_path = run_dir / "global_series.csv"
    if series_path.exists():
        series = GlobalSeries.from_csv(series_path)
        figures.fig_growth(series, fig_dir / "growth_loglog.png")
        wrote.append("growth_loglog.png")
    snaps = list_snapshots(run_dir, "theta")
    if snaps:
        if args.times:
            wanted = []
            for treq in args.times:
                i = int(np.argmin([abs(t - treq) for t, _ in snaps]))
                wanted.append(snaps[i])
        else:
            wanted = snaps[-2:] if len(snaps) > 1 else snaps
        for t, meta in wanted:
            theta, _ = read_snapshot(meta)
            name = f"regions_t{t:010.6f}.png"
            figures.fig_regions(theta, t, args.fraction, args.threshold,
                                fig_dir / name)
            wrote.append(name)
    cert_path = run_dir / "certificates.csv"
    if cert_path.exists():
        rows = figures.read_certificates_csv(cert_path)
        if len(rows["t"]):
            figures.fig_certificates(rows, fig_dir / "certificates.png")
            wrote.append("certificates.png")
    seg_path = run_dir / "segment_series.csv"
    if seg_path.exists():
        seg = SegmentSeries.from_csv(seg_path)
        figures.fig_segment(seg, fig_dir / "segment_quantities.png")
        wrote.append("segment_quantities.png")
    if not wrote:
        print(f"nothing to render in {run_dir}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {len(wrote)} figures to {fig_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(
        prog="sqgtrack",
        description="Pseudo-spectral QG solver with level-set tracking "
                    "and growth-bound verification.")
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="run the solver from a config file")
    ps.add_argument("config")
    ps.set_defaults(fn=cmd_simulate)

    pd = sub.add_parser("diagnose", help="region/geometry diagnostics of a snapshot")
    pd.add_argument("snapshot")
    pd.add_argument("--fraction", type=float, default=0.5)
    pd.add_argument("--threshold", type=float, default=10.0)
    pd.set_defaults(fn=cmd_diagnose)

    pt = sub.add_parser("trace", help="track a level-set segment through a run")
    pt.add_argument("run_dir")
    pt.add_argument("--seed-time", type=float, required=True, dest="seed_time")
    pt.add_argument("--seed-length", type=float, default=1.0, dest="seed_length")
    pt.add_argument("--until", type=float, default=None)
    pt.set_defaults(fn=cmd_trace)

    pv = sub.add_parser("verify", help="bound checks and growth certificates")
    pv.add_argument("run_dir")
    pv.add_argument("--r", type=float, default=None)
    pv.add_argument("--t-start", type=float, default=None, dest="t_start")
    pv.set_defaults(fn=cmd_verify)

    pr = sub.add_parser("report", help="render figures for a run directory")
    pr.add_argument("run_dir")
    pr.add_argument("--times", type=float, nargs="*", default=None)
    pr.add_argument("--fraction", type=float, default=0.5)
    pr.add_argument("--threshold", type=float, default=10.0)
    pr.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    _apply_thread_env()
    args = build_parser().parse_args(argv)
    return args.fn(args)


def console_main():
    sys.exit(main())
