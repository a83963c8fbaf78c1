"""On-disk formats: binary field snapshots and run-length region masks.

A snapshot is a pair of files ``<name>.meta`` / ``<name>.f64``: a small
text header (magic "SQG1", grid size, model time, byte order, layout,
dtype) plus raw little-endian float64 payload, n*n values row-major
with x2 as the outer index.  Writes are atomic (temp file + rename).
"""

from __future__ import annotations

import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .geometry import RegionMask
from .spectral import Grid, ScalarField

MAGIC = "SQG1"
MASK_MAGIC = "SQGMASK1"


class FormatError(Exception):
    """Bad magic, inconsistent header, or payload size mismatch."""


def _atomic_write_bytes(path: Path, payload: bytes):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def snapshot_name(prefix: str, t: float) -> str:
    return f"{prefix}_t{t:010.6f}"


def write_snapshot(directory, name: str, field: ScalarField, t: float) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n = field.grid.n
    meta = (
        f"{MAGIC}\n"
        f"n = {n}\n"
        f"t = {t!r}\n"
        "byte_order = LE\n"
        "layout = row-major\n"
        "dtype = f64\n"
    )
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    _atomic_write_bytes(directory / f"{name}.f64", payload)
    _atomic_write_bytes(directory / f"{name}.meta", meta.encode())
    return directory / f"{name}.meta"


def read_snapshot(meta_path):
    """Load (ScalarField, t) from a .meta path or its basename."""
    meta_path = Path(meta_path)
    if meta_path.suffix != ".meta":
        meta_path = meta_path.with_suffix(".meta")
    try:
        lines = meta_path.read_text().splitlines()
    except OSError as exc:
        raise FormatError(f"{meta_path}: {exc}") from None
    if not lines or lines[0].strip() != MAGIC:
        raise FormatError(f"{meta_path}: bad magic (expected {MAGIC})")
    fields = {}
    for line in lines[1:]:
        if "=" in line:
            key, _, val = line.partition("=")
            fields[key.strip()] = val.strip()
    try:
        n = int(fields["n"])
        t = float(fields["t"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{meta_path}: malformed header ({exc})") from None
    if fields.get("byte_order") != "LE" or fields.get("dtype") != "f64":
        raise FormatError(f"{meta_path}: unsupported byte order or dtype")
    if fields.get("layout") != "row-major":
        raise FormatError(f"{meta_path}: unsupported layout")
    payload_path = meta_path.with_suffix(".f64")
    payload = payload_path.read_bytes()
    if len(payload) != 8 * n * n:
        raise FormatError(
            f"{payload_path}: payload is {len(payload)} bytes, expected {8 * n * n}"
        )
    values = np.frombuffer(payload, dtype="<f8").reshape(n, n).copy()
    return ScalarField(Grid(n), values), t


_SNAP_RE = re.compile(r"^(?P<prefix>.+)_t(?P<t>\d+\.\d+)\.meta$")


def list_snapshots(directory, prefix: str = "theta"):
    """Sorted [(t, meta_path)] for one snapshot family in a directory."""
    out = []
    for p in Path(directory).glob(f"{prefix}_t*.meta"):
        m = _SNAP_RE.match(p.name)
        if m and m.group("prefix") == prefix:
            out.append((float(m.group("t")), p))
    out.sort(key=lambda pair: pair[0])
    return out


def write_mask(path, mask: RegionMask):
    """Run-length encoded boolean grid, one row per line.

    Runs alternate outside/inside starting outside; each row's runs sum
    to n.  Header records size and cell-counted area for quick checks.
    """
    lines = [MASK_MAGIC, f"n = {mask.grid.n}", f"area = {mask.area!r}"]
    for j in range(mask.grid.n):
        row = mask.member[j]
        flips = np.nonzero(np.diff(row))[0] + 1
        bounds = np.concatenate([[0], flips, [len(row)]])
        runs = np.diff(bounds)
        if row[0]:
            runs = np.concatenate([[0], runs])
        lines.append(" ".join(str(int(r)) for r in runs))
    _atomic_write_bytes(Path(path), ("\n".join(lines) + "\n").encode())


def read_mask(path) -> RegionMask:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != MASK_MAGIC:
        raise FormatError(f"{path}: bad magic (expected {MASK_MAGIC})")
    n = int(lines[1].partition("=")[2])
    member = np.zeros((n, n), dtype=bool)
    for j, line in enumerate(lines[3:3 + n]):
        runs = [int(tok) for tok in line.split()]
        if sum(runs) != n:
            raise FormatError(f"{path}: row {j} runs sum to {sum(runs)}, expected {n}")
        pos, inside = 0, False
        for r in runs:
            if inside:
                member[j, pos:pos + r] = True
            pos += r
            inside = not inside
    return RegionMask(Grid(n), member)
