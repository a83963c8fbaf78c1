"""Figure rendering for the report command."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .geometry import geometry_from_theta


def fig_growth(series, path):
    """loglog of the gradient sup norm versus time."""
    mask = series.omega > math.e
    fig, ax = plt.subplots(figsize=(6, 4))
    if mask.any():
        ax.plot(series.t[mask], np.log(np.log(series.omega[mask])), "k-")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\log\log\,\|\nabla^\perp\theta\|_\infty$")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_regions(theta, t, fraction, threshold, path):
    """Level sets with the high-gradient and high-grad-xi region boundaries."""
    x1, x2 = theta.grid.coords()
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.contour(x1, x2, theta.values, levels=12, colors="0.75", linewidths=0.6)
    try:
        geom = geometry_from_theta(theta)
        mag = geom.magnitude.values
        ax.contour(x1, x2, mag, levels=[fraction * mag.max()],
                   colors="crimson", linewidths=1.2)
        gx = np.nan_to_num(geom.grad_xi_norm.values, nan=0.0)
        if gx.max() >= threshold:
            ax.contour(x1, x2, gx, levels=[threshold], colors="royalblue",
                       linewidths=1.2)
    except Exception:
        pass  # flat fields render level sets only
    ax.set_xlim(0, 2 * np.pi)
    ax.set_ylim(0, 2 * np.pi)
    ax.set_aspect("equal")
    ax.set_title(f"t = {t:g}  (red: gradient region, blue: grad-xi region)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_certificates(cert_rows, path):
    """Measured iterated-log growth against the certified lines."""
    t = cert_rows["t"]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].plot(t, cert_rows["loglog_measured"], "ko-", label="measured")
    axes[0].plot(t, cert_rows["loglog_certified"], "r--", label="certified")
    axes[0].set_ylabel(r"$\log\log\,\Omega$")
    axes[1].plot(t, cert_rows["logloglog_measured"], "ko-", label="measured")
    axes[1].plot(t, cert_rows["logloglog_certified"], "r--", label="certified")
    axes[1].set_ylabel(r"$\log\log\log\,\Omega$")
    for ax in axes:
        ax.set_xlabel("t")
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_segment(series, path):
    """Tracked-segment diagnostics over time."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
    axes[0, 0].plot(series.t, series.l, "k-")
    axes[0, 0].set_ylabel("arc length l")
    axes[0, 1].plot(series.t, series.omega_l, "k-")
    axes[0, 1].set_ylabel("max gradient on segment")
    axes[1, 0].plot(series.t, series.m * series.l, "k-", label="m l")
    axes[1, 0].plot(series.t, series.k * series.l, "b-", label="k l")
    axes[1, 0].set_ylabel("m l, k l")
    axes[1, 0].legend()
    axes[1, 1].plot(series.t, series.n_markers, "k-")
    axes[1, 1].set_ylabel("markers")
    for ax in axes[1]:
        ax.set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def read_certificates_csv(path):
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    cols = {name: [] for name in header}
    for line in lines[1:]:
        for name, val in zip(header, line.split(",")):
            cols[name].append(float(val))
    return {k: np.asarray(v) for k, v in cols.items()}
