"""Experiment configs: dataclasses loaded strictly from TOML.

Every section and key must be known; a typo is a ``ConfigError`` rather
than a silently ignored setting.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .stitch import geometric_grid


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridConfig:
    """Either an explicit ``temperatures`` list or a geometric grid."""

    t_min: float | None = None
    t_max: float | None = None
    per_decade: int = 20
    refine: tuple[tuple[float, float], ...] = ()
    refine_per_decade: int = 60
    temperatures: tuple[float, ...] = ()

    def values(self) -> np.ndarray:
        if self.temperatures:
            T = np.array(sorted(set(float(t) for t in self.temperatures), reverse=True))
            if np.any(T <= 0):
                raise ConfigError("temperatures must be positive")
            return T
        if self.t_min is None or self.t_max is None:
            raise ConfigError("grid needs 'temperatures' or both 't_min' and 't_max'")
        try:
            return geometric_grid(self.t_min, self.t_max, self.per_decade, self.refine, self.refine_per_decade)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class BpSection:
    l: int = 4
    tol: float = 1e-12
    max_iter: int | None = None
    belief_max_dim: int = 2048
    fail_on_nonconvergence: bool = True


@dataclass(frozen=True)
class ChainBpConfig:
    B: float = 1.0
    bp: BpSection = field(default_factory=BpSection)
    grid: GridConfig = field(default_factory=GridConfig)
    oracle: bool = True


@dataclass(frozen=True)
class SpinGlassConfig:
    B: tuple[float, ...] = (1.0,)
    T: tuple[float, ...] = (1.0,)
    depth: int = 4
    instances: int = 20
    keep: int = 1


@dataclass(frozen=True)
class MeraSection:
    chi: int = 2
    levels: int = 2
    sweeps: int = 200
    top_sites: int = 4


@dataclass(frozen=True)
class CgbpConfig:
    B: float = 1.0
    bp: BpSection = field(default_factory=lambda: BpSection(fail_on_nonconvergence=False))
    mera: MeraSection = field(default_factory=MeraSection)
    grid: GridConfig = field(default_factory=GridConfig)
    oracle: bool = True


def _build(base, doc: dict, where: str):
    label = f"[{where}]" if where else "the top level"
    if not isinstance(doc, dict):
        raise ConfigError(f"{label} must be a table")
    fields = {f.name: f for f in dataclasses.fields(base)}
    unknown = sorted(set(doc) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in {label}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in doc.items():
        default = getattr(base, name)
        sub = f"{where}.{name}" if where else name
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(default, value, sub)
        else:
            kwargs[name] = _coerce(value, default, sub)
    try:
        return dataclasses.replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _coerce(value, default, where):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"'{where}' must be true or false")
        return value
    if isinstance(value, bool):
        raise ConfigError(f"'{where}' must be a number")
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"'{where}' must be an array")
        if where.endswith("refine"):
            if any(not isinstance(p, list) or len(p) != 2 for p in value):
                raise ConfigError(f"'{where}' must be a list of [low, high] pairs")
            return tuple((float(a), float(b)) for a, b in value)
        if any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
            raise ConfigError(f"'{where}' must contain numbers")
        return tuple(float(v) for v in value)
    if isinstance(default, int) or (default is None and where.endswith("max_iter")):
        if not isinstance(value, int):
            raise ConfigError(f"'{where}' must be an integer")
        return value
    if not isinstance(value, (int, float)):
        raise ConfigError(f"'{where}' must be a number")
    return float(value)


COMMANDS = {"chain-bp": ChainBpConfig, "spin-glass": SpinGlassConfig, "cgbp": CgbpConfig}


def parse_config(command: str, text: str):
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    cfg = _build(COMMANDS[command](), doc, "")
    _validate(cfg)
    return cfg


def load_config(command: str, path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(command, fh.read())


def _validate(cfg) -> None:
    if isinstance(cfg, (ChainBpConfig, CgbpConfig)):
        if cfg.bp.l < 2:
            raise ConfigError("bp.l must be at least 2")
        if not cfg.bp.tol > 0:
            raise ConfigError("bp.tol must be positive")
        cfg.grid.values()
    if isinstance(cfg, CgbpConfig):
        if cfg.mera.levels < 0 or cfg.mera.chi < 1:
            raise ConfigError("mera.levels must be >= 0 and mera.chi >= 1")
    if isinstance(cfg, SpinGlassConfig):
        if cfg.depth < 1 or cfg.instances < 1:
            raise ConfigError("depth and instances must be positive")
        if any(t <= 0 for t in cfg.T):
            raise ConfigError("temperatures must be positive")


def config_hash(cfg) -> str:
    """SHA-256 of the canonical JSON form of a parsed config."""
    text = json.dumps(dataclasses.asdict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
