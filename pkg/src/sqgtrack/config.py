"""Run configuration files: plain ``key = value`` lines.

Unknown keys are rejected; malformed lines report their line number.
Blank lines and '#' comments are allowed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .spectral import Grid, ScalarField


class ConfigError(Exception):
    def __init__(self, message, line=None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


@dataclass
class RunConfig:
    n: int = 256
    t_end: float = 1.0
    cfl_safety: float = 1.0 / 6.0
    dt_max: float = 1e-2
    snapshot_every: float = 0.05
    series_stride: int = 4
    initial: str = "cmt"
    out_dir: str = "sqg_run"
    region_fraction: float = 0.5
    grad_xi_threshold: float = 10.0
    seed_time: float = 0.0
    seed_length: float = 1.0
    partition_r: float = 2.0


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_INT_KEYS = {"n", "series_stride"}
_STR_KEYS = {"initial", "out_dir"}


def parse_config(path) -> RunConfig:
    cfg = RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(str(exc)) from None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", ln)
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r}", ln)
        try:
            if key in _STR_KEYS:
                parsed = val
            elif key in _INT_KEYS:
                parsed = int(val)
            else:
                parsed = float(val)
                if not math.isfinite(parsed):
                    raise ValueError("value must be finite")
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", ln)
        setattr(cfg, key, parsed)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.n < 8 or cfg.n % 2:
        raise ConfigError(f"n must be even and >= 8, got {cfg.n}")
    if cfg.t_end <= 0:
        raise ConfigError("t_end must be positive")
    if not 0 < cfg.cfl_safety <= 1:
        raise ConfigError("cfl_safety must lie in (0, 1]")
    if cfg.snapshot_every <= 0:
        raise ConfigError("snapshot_every must be positive")
    if cfg.series_stride < 1:
        raise ConfigError("series_stride must be >= 1")
    if not 0 < cfg.region_fraction < 1:
        raise ConfigError("region_fraction must lie in (0, 1)")
    if cfg.grad_xi_threshold <= 0:
        raise ConfigError("grad_xi_threshold must be positive")
    if cfg.seed_length <= 0:
        raise ConfigError("seed_length must be positive")
    if cfg.partition_r <= 1:
        raise ConfigError("partition_r must exceed 1")


def snapshot_times(cfg: RunConfig):
    """Multiples of snapshot_every within [0, t_end]."""
    count = int(math.floor(cfg.t_end / cfg.snapshot_every + 1e-9))
    return tuple(round(i * cfg.snapshot_every, 12) for i in range(count + 1))


def initial_field(spec: str, grid: Grid) -> ScalarField:
    """Named preset or explicit cosine-mode list.

    Presets: ``zero``, ``cmt`` (sin x1 sin x2 + cos x2, the hyperbolic
    saddle data), ``cosx``, ``cosy``.  Mode lists read
    ``modes: k1,k2,amp[,phase]; ...`` meaning sum of amp*cos(k.x+phase).
    """
    spec = spec.strip()
    if spec == "zero":
        return ScalarField.zeros(grid)
    if spec == "cmt":
        return ScalarField.from_function(
            grid, lambda x1, x2: np.sin(x1) * np.sin(x2) + np.cos(x2)
        )
    if spec == "cosx":
        return ScalarField.from_function(grid, lambda x1, x2: np.cos(x1))
    if spec == "cosy":
        return ScalarField.from_function(grid, lambda x1, x2: np.cos(x2))
    if spec.startswith("modes:"):
        terms = []
        for part in spec[len("modes:"):].split(";"):
            part = part.strip()
            if not part:
                continue
            vals = [float(v) for v in part.split(",")]
            if len(vals) == 3:
                vals.append(0.0)
            if len(vals) != 4:
                raise ConfigError(f"mode term needs k1,k2,amp[,phase]: {part!r}")
            terms.append(vals)
        if not terms:
            raise ConfigError("empty mode list")

        def fn(x1, x2):
            out = np.zeros_like(x1)
            for k1, k2, amp, phase in terms:
                out += amp * np.cos(k1 * x1 + k2 * x2 + phase)
            return out

        return ScalarField.from_function(grid, fn)
    raise ConfigError(f"unknown initial data {spec!r}")
