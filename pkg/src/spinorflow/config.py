"""Run configuration: a ``key = value`` text file, validated before any allocation.

A file without a section header is read as if it started with ``[run]``.
Example::

    dimension = 2
    dims = 32
    family = random_seeded
    amplitude = 0.1
    seed = 3
    t_end = 0.01
"""
from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .flow import SCHEMES, SYSTEMS
from .initial_data import FAMILIES
from .lattice import MIN_SITES_PER_AXIS, LatticeChart


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key {key!r}: {message}")


@dataclass
class RunConfig:
    dimension: int = 2
    dims: list[int] = field(default_factory=lambda: [32, 32])
    h: float | None = None  # defaults to 1/dims[0] (unit torus)
    stencil_order: int = 4
    scheme: str = "rk4"
    system: str = "modified"
    cfl_factor: float = 0.2
    dt: float | None = None  # overrides the CFL step when given
    t_end: float = 0.01
    family: str = "parallel"
    xi: list[float] | None = None
    amplitude: float = 0.1
    frequency: int = 1
    seed: int = 0
    smoothness: float = 2.0
    modes: int = 3
    output_every: int = 10
    checkpoint_every: int = 0
    alpha: float = 1.0
    blowup_threshold: float = 1e6
    output_dir: str = "out"

    def chart(self) -> LatticeChart:
        h = self.h if self.h is not None else 1.0 / self.dims[0]
        return LatticeChart(tuple(self.dims), h, self.stencil_order)

    def family_params(self) -> dict:
        p = {"amplitude": self.amplitude, "frequency": self.frequency, "seed": self.seed,
             "smoothness": self.smoothness, "modes": self.modes}
        if self.xi is not None:
            p["xi"] = self.xi
        return p

    def to_dict(self) -> dict:
        return asdict(self)


_INT = {"dimension", "stencil_order", "frequency", "seed", "modes", "output_every", "checkpoint_every"}
_FLOAT = {"h", "cfl_factor", "dt", "t_end", "amplitude", "smoothness", "alpha", "blowup_threshold"}
_STR = {"scheme", "system", "family", "output_dir"}
_LIST_INT = {"dims"}
_LIST_FLOAT = {"xi"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _INT:
            return int(raw)
        if key in _FLOAT:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError("not finite")
            return v
        if key in _LIST_INT:
            return [int(x) for x in raw.replace(",", " ").split()]
        if key in _LIST_FLOAT:
            return [float(x) for x in raw.replace(",", " ").split()]
    except ValueError as err:
        raise ConfigError(key, f"cannot parse {raw!r} ({err})") from None
    return raw


def from_mapping(values: dict) -> RunConfig:
    known = _INT | _FLOAT | _STR | _LIST_INT | _LIST_FLOAT
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(key, "unknown key")
        kwargs[key] = _parse_value(key, raw) if isinstance(raw, str) else raw
    cfg = RunConfig(**kwargs)
    validate(cfg)
    return cfg


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError("config", f"cannot read {path}: {err.strerror}") from err
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError("config", f"malformed file: {err}") from err
    if not parser.has_section("run"):
        raise ConfigError("run", "missing [run] section")
    return from_mapping(dict(parser.items("run")))


def validate(cfg: RunConfig) -> None:
    if cfg.dimension < 2:
        raise ConfigError("dimension", "must be at least 2")
    if len(cfg.dims) == 1:
        cfg.dims = cfg.dims * cfg.dimension
    if len(cfg.dims) != cfg.dimension:
        raise ConfigError("dims", f"expected {cfg.dimension} entries, got {len(cfg.dims)}")
    if min(cfg.dims) < MIN_SITES_PER_AXIS:
        raise ConfigError("dims", f"each axis needs at least {MIN_SITES_PER_AXIS} sites")
    if cfg.h is not None and not cfg.h > 0:
        raise ConfigError("h", "must be positive")
    if cfg.stencil_order not in (2, 4):
        raise ConfigError("stencil_order", "must be 2 or 4")
    if cfg.scheme not in SCHEMES:
        raise ConfigError("scheme", f"must be one of {SCHEMES}")
    if cfg.system not in SYSTEMS:
        raise ConfigError("system", f"must be one of {SYSTEMS}")
    if not cfg.cfl_factor > 0:
        raise ConfigError("cfl_factor", "must be positive")
    if cfg.dt is not None and not cfg.dt > 0:
        raise ConfigError("dt", "must be positive")
    if not cfg.t_end >= 0:
        raise ConfigError("t_end", "must be nonnegative")
    if cfg.family not in FAMILIES:
        raise ConfigError("family", f"must be one of {FAMILIES}")
    if cfg.family in ("plane_wave", "metric_mode"):
        if cfg.xi is None:
            raise ConfigError("xi", f"required for family {cfg.family}")
        if len(cfg.xi) != cfg.dimension:
            raise ConfigError("xi", f"expected {cfg.dimension} components")
    if cfg.family == "random_seeded" and cfg.dimension * cfg.amplitude >= 1:
        raise ConfigError("amplitude", "too large for a positive definite random metric")
    if cfg.family == "metric_mode" and abs(cfg.amplitude) >= 1:
        raise ConfigError("amplitude", "must be below 1 in magnitude")
    if cfg.modes < 1:
        raise ConfigError("modes", "must be at least 1")
    if cfg.output_every < 1:
        raise ConfigError("output_every", "must be at least 1")
    if cfg.checkpoint_every < 0:
        raise ConfigError("checkpoint_every", "must be nonnegative")
    if not cfg.blowup_threshold > 0:
        raise ConfigError("blowup_threshold", "must be positive")
