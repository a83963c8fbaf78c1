"""Time-series containers and their CSV formats.

Column layouts are part of the external contract: readers reject files
whose header does not match exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

GLOBAL_COLUMNS = ("t", "omega", "u_max", "bkm", "area_A", "area_B", "overlap_frac")
SEGMENT_COLUMNS = ("t", "l", "m", "k", "omega_l", "u_xi", "u_n", "n_markers")


class SeriesFormatError(Exception):
    """Bad series CSV: wrong header or malformed rows."""


def _write_csv(path, header, columns):
    rows = len(columns[0])
    lines = [",".join(header)]
    for i in range(rows):
        lines.append(",".join(_fmt(col[i]) for col in columns))
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _read_csv(path, header):
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise SeriesFormatError(f"{path}: empty file")
    got = tuple(s.strip() for s in text[0].split(","))
    if got != header:
        raise SeriesFormatError(f"{path}: header {got} does not match {header}")
    data = []
    for ln, line in enumerate(text[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise SeriesFormatError(f"{path}:{ln}: expected {len(header)} fields")
        try:
            data.append([float(p) for p in parts])
        except ValueError as exc:
            raise SeriesFormatError(f"{path}:{ln}: {exc}") from None
    arr = np.asarray(data, dtype=float)
    if arr.size == 0:
        arr = arr.reshape(0, len(header))
    return arr


@dataclass
class GlobalSeries:
    """Whole-domain diagnostics sampled along a run.

    omega is the sup norm of the perpendicular gradient, u_max the sup
    norm of the velocity, bkm the running trapezoid integral of omega.
    """

    t: np.ndarray
    omega: np.ndarray
    u_max: np.ndarray
    bkm: np.ndarray
    area_A: np.ndarray
    area_B: np.ndarray
    overlap_frac: np.ndarray

    def __post_init__(self):
        for name in GLOBAL_COLUMNS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("sample times must be strictly increasing")
        if len(self.bkm) > 1 and np.any(np.diff(self.bkm) < -1e-15):
            raise ValueError("bkm integral must be nondecreasing")

    def __len__(self):
        return len(self.t)

    def to_csv(self, path):
        _write_csv(path, GLOBAL_COLUMNS, [getattr(self, c) for c in GLOBAL_COLUMNS])

    @classmethod
    def from_csv(cls, path) -> "GlobalSeries":
        arr = _read_csv(path, GLOBAL_COLUMNS)
        return cls(*(arr[:, i] for i in range(len(GLOBAL_COLUMNS))))


@dataclass
class SegmentState:
    """Instantaneous diagnostics of one tracked level-set segment."""

    t: float
    l: float
    m: float
    k: float
    omega_l: float
    u_xi: float
    u_n: float
    n_markers: int
    u_xi_endpoints: float = 0.0  # endpoint-difference variant, not serialized


@dataclass
class SegmentSeries:
    """Segment diagnostics over time (columns mirror the CSV schema)."""

    t: np.ndarray
    l: np.ndarray
    m: np.ndarray
    k: np.ndarray
    omega_l: np.ndarray
    u_xi: np.ndarray
    u_n: np.ndarray
    n_markers: np.ndarray
    sbeta_max_dev: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in SEGMENT_COLUMNS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.sbeta_max_dev is None:
            self.sbeta_max_dev = np.full(len(self.t), np.nan)
        else:
            self.sbeta_max_dev = np.asarray(self.sbeta_max_dev, dtype=float)
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("sample times must be strictly increasing")

    def __len__(self):
        return len(self.t)

    @classmethod
    def from_states(cls, states, sbeta_max_dev=None) -> "SegmentSeries":
        cols = {c: np.array([getattr(s, c) for s in states]) for c in SEGMENT_COLUMNS}
        return cls(**cols, sbeta_max_dev=sbeta_max_dev)

    def to_csv(self, path):
        _write_csv(path, SEGMENT_COLUMNS, [getattr(self, c) for c in SEGMENT_COLUMNS])

    @classmethod
    def from_csv(cls, path) -> "SegmentSeries":
        arr = _read_csv(path, SEGMENT_COLUMNS)
        return cls(*(arr[:, i] for i in range(len(SEGMENT_COLUMNS))))
