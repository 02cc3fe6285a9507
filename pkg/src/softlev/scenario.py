"""Scenario records and the structured-text configuration loader.

A configuration is a YAML mapping whose nested keys are the dotted field
paths of :class:`Scenario` (``geometry.a``, ``solver.tolerance``, ...).  All
values are SI numbers; strings with unit suffixes are rejected.  Geometry
may give ``r_over_a`` / ``h_over_a`` instead of ``r`` / ``h`` so that a sweep
over ``geometry.a`` keeps the shape fixed.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from typing import Any

import yaml

from .dissipation import ConductorBody
from .geometry import GridSpec, TrapGeometry, validate
from .magnetostatics import SolverControls
from .materials import (NB, YIG, FerromagnetMaterial, SuperconductorMaterial, classify_regime,
                        ferromagnet_from_dict, superconductor_from_dict)


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message

    def as_dict(self) -> dict:
        return {"error": "config", "path": self.path, "message": self.message}


@dataclass(frozen=True)
class GridSettings:
    """Grid layout relative to the trap; resolved to a :class:`GridSpec`.

    ``half_extent`` defaults to twice the disk outer radius on every axis and
    the refined core covers the hole plus ``core_margin`` sphere radii.
    """
    cells: tuple[int, int, int] = (64, 64, 64)
    refinement: float | None = 8.0
    half_extent: tuple[float, float, float] | None = None
    core_margin: float = 0.3

    def __post_init__(self) -> None:
        if len(self.cells) != 3 or any(int(n) < 32 for n in self.cells):
            raise ValueError("at least 32 cells per axis are required")
        if self.refinement is not None and not self.refinement >= 1:
            raise ValueError("refinement must be >= 1")

    def resolve(self, geom: TrapGeometry) -> GridSpec:
        L = self.half_extent or (2 * geom.outer_radius,) * 3
        m = self.core_margin * geom.a
        core = (geom.r + m, geom.r + m, geom.h / 2 + m) if self.refinement else None
        anchors = (geom.r, geom.r, geom.h / 2) if self.refinement else None
        return GridSpec(tuple(float(v) for v in L), tuple(int(n) for n in self.cells),
                        self.refinement, core, anchors)

    def with_cells(self, n: int) -> "GridSettings":
        return dataclasses.replace(self, cells=(n, n, n))


@dataclass(frozen=True)
class ScanSettings:
    span: float = 0.2             # half range of the scan, in sphere radii
    points: int = 5               # samples per axis (odd keeps the centre)
    fit_window: float = 0.2       # quadratic fit window, in sphere radii
    residual_threshold: float = 0.02
    uniformity_factor: float = 0.1
    gravity: bool = True

    def __post_init__(self) -> None:
        if self.points < 3:
            raise ValueError("a scan needs at least 3 points")
        if not self.span > 0 or not self.fit_window > 0:
            raise ValueError("scan span and fit window must be positive")

    def offsets(self):
        import numpy as np
        return np.linspace(-self.span, self.span, self.points)


@dataclass(frozen=True)
class Scenario:
    geometry: TrapGeometry
    ferromagnet: FerromagnetMaterial = YIG
    superconductor: SuperconductorMaterial = NB
    B_max_target: float = 0.1
    temperature: float = 4.0
    pressure: float = 1e-5
    grid: GridSettings = field(default_factory=GridSettings)
    solver: SolverControls = field(default_factory=SolverControls)
    noise_levels: tuple[float, ...] = (1e-6, 1e-10, 1e-13)
    noise_bandwidth: float = 1.0
    thermal_Q: float | None = None          # overrides the budget Q in the noise line
    conductors: tuple[ConductorBody, ...] = ()
    trap_frequencies: tuple[float, float, float] | None = None
    quadrature_order: int = 131
    scan: ScanSettings = field(default_factory=ScanSettings)
    eddy_amplitude: float | None = None
    cycles_resolution: int = 100

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.geometry.a ** 3

    @property
    def mass(self) -> float:
        return self.ferromagnet.rho * self.volume

    def grid_spec(self) -> GridSpec:
        return self.grid.resolve(self.geometry)

    def omega(self, axis: str) -> float:
        if self.trap_frequencies is None:
            raise ValueError("trap frequencies unknown; characterise the trap first")
        f = dict(zip("xyz", self.trap_frequencies))[axis]
        return 2 * math.pi * f

    def with_frequencies(self, f) -> "Scenario":
        return dataclasses.replace(self, trap_frequencies=tuple(float(v) for v in f))

    def consistency_issues(self) -> list[str]:
        """Cross-field problems that make a run meaningless unless forced."""
        issues = list(validate(self.geometry).violations)
        regime = classify_regime(self.superconductor, self.B_max_target, self.temperature)
        if not regime.usable:
            issues.append(f"superconductor {self.superconductor.name} is {regime.name} at "
                          f"{self.B_max_target} T, {self.temperature} K (not usable)")
        return issues


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

DEFAULT_CONFIG: dict[str, Any] = {
    "geometry": {"a": 0.25e-3, "r_over_a": 1.4, "h_over_a": 4.0, "theta": math.radians(10.0)},
    "ferromagnet": {"name": "YIG"},
    "superconductor": {"name": "Nb"},
    "B_max_target": 0.1,
    "temperature": 4.0,
    "pressure": 1e-5,
}

_GEOMETRY_KEYS = {f.name for f in dataclasses.fields(TrapGeometry)} | {"r_over_a", "h_over_a",
                                                                         "outer_over_r"}


def _check_number(path: str, v, positive: bool = False, allow_none: bool = False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected an SI number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(path, "value must be finite")
    if positive and not v > 0:
        raise ConfigError(path, "value must be positive")
    return float(v)


def _mapping(path: str, v) -> dict:
    if v is None:
        return {}
    if not isinstance(v, dict):
        raise ConfigError(path, "expected a mapping")
    return v


def _build_geometry(raw: dict) -> TrapGeometry:
    unknown = set(raw) - _GEOMETRY_KEYS
    if unknown:
        raise ConfigError(f"geometry.{sorted(unknown)[0]}", "unknown field")
    vals = {k: _check_number(f"geometry.{k}", v, allow_none=True) for k, v in raw.items()}
    a = vals.get("a")
    if a is None:
        raise ConfigError("geometry.a", "required")
    if "r" in vals and "r_over_a" in vals:
        raise ConfigError("geometry.r", "give r or r_over_a, not both")
    if "h" in vals and "h_over_a" in vals:
        raise ConfigError("geometry.h", "give h or h_over_a, not both")
    r = vals.pop("r", None) or a * vals.pop("r_over_a", 1.4)
    h = vals.pop("h", None) or a * vals.pop("h_over_a", 4.0)
    vals.pop("r_over_a", None)
    vals.pop("h_over_a", None)
    outer_over_r = vals.pop("outer_over_r", None)
    if outer_over_r is not None:
        if vals.get("disk_outer_radius") is not None:
            raise ConfigError("geometry.outer_over_r", "conflicts with disk_outer_radius")
        vals["disk_outer_radius"] = outer_over_r * r
    vals.pop("a")
    if "theta" not in vals:
        raise ConfigError("geometry.theta", "required (radians)")
    kw = {k: v for k, v in vals.items() if v is not None}
    try:
        return TrapGeometry(a=a, r=r, h=h, **kw)
    except TypeError as exc:
        raise ConfigError("geometry", str(exc)) from None


def _build_record(path: str, raw: dict, builder, cls):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
    for k, v in raw.items():
        if k not in ("name", "hard_pinning"):
            _check_number(f"{path}.{k}", v, allow_none=True)
    try:
        return builder(dict(raw))
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def _build_dataclass(path: str, cls, raw: dict, tuples: tuple[str, ...] = ()):
    types = {f.name: str(f.type) for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(types)
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
    kw = {}
    for k, v in raw.items():
        if isinstance(v, str) and "str" not in types[k]:
            raise ConfigError(f"{path}.{k}", f"expected an SI number, got {v!r} "
                              "(unit suffixes are not allowed)")
        if k in tuples and v is not None:
            if isinstance(v, (int, float)):
                v = (v, v, v)
            if not isinstance(v, (list, tuple)) or len(v) != 3:
                raise ConfigError(f"{path}.{k}", "expected a number or a list of three")
            v = tuple(_check_number(f"{path}.{k}", x) for x in v)
            if k == "cells":
                v = tuple(int(x) for x in v)
        elif isinstance(v, bool) or isinstance(v, str):
            pass
        else:
            v = _check_number(f"{path}.{k}", v, allow_none=True)
            if v is not None and float(v).is_integer() and isinstance(raw[k], int):
                v = int(v)
        kw[k] = v
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


_TOP_KEYS = {f.name for f in dataclasses.fields(Scenario)}


def merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_path(raw: dict, path: str, value) -> dict:
    """Copy of ``raw`` with the dotted ``path`` set to ``value``."""
    out = copy.deepcopy(raw)
    keys = path.split(".")
    if keys[0] not in _TOP_KEYS:
        raise ConfigError(path, "unknown parameter path")
    node = out
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(path, "path does not resolve to a mapping")
    if keys[0] == "geometry" and keys[-1] in ("r", "h"):
        node.pop(f"{keys[-1]}_over_a", None)
    node[keys[-1]] = value
    return out


def scenario_from_dict(raw: dict) -> Scenario:
    raw = _mapping("<root>", raw)
    base = copy.deepcopy(DEFAULT_CONFIG)
    user_geom = _mapping("geometry", raw.get("geometry"))
    for key in ("r", "h"):
        if key in user_geom:
            base["geometry"].pop(f"{key}_over_a", None)
    raw = merge(base, raw)
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    geom = _build_geometry(_mapping("geometry", raw["geometry"]))
    fm = _build_record("ferromagnet", _mapping("ferromagnet", raw.get("ferromagnet")),
                       ferromagnet_from_dict, FerromagnetMaterial)
    sc = _build_record("superconductor", _mapping("superconductor", raw.get("superconductor")),
                       superconductor_from_dict, SuperconductorMaterial)
    kw: dict[str, Any] = dict(geometry=geom, ferromagnet=fm, superconductor=sc)
    for key in ("B_max_target", "temperature", "pressure", "noise_bandwidth"):
        if key in raw:
            kw[key] = _check_number(key, raw[key], positive=True)
    if raw.get("thermal_Q") is not None:
        kw["thermal_Q"] = _check_number("thermal_Q", raw["thermal_Q"], positive=True)
    if raw.get("eddy_amplitude") is not None:
        kw["eddy_amplitude"] = _check_number("eddy_amplitude", raw["eddy_amplitude"], positive=True)
    for key in ("quadrature_order", "cycles_resolution"):
        if key in raw:
            v = raw[key]
            if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
                raise ConfigError(key, "expected a positive integer")
            kw[key] = v
    if "noise_levels" in raw:
        levels = raw["noise_levels"]
        if not isinstance(levels, list) or not levels:
            raise ConfigError("noise_levels", "expected a non-empty list")
        kw["noise_levels"] = tuple(_check_number(f"noise_levels[{i}]", v) for i, v in enumerate(levels))
    if raw.get("trap_frequencies") is not None:
        f = raw["trap_frequencies"]
        if not isinstance(f, list) or len(f) != 3:
            raise ConfigError("trap_frequencies", "expected [f_x, f_y, f_z] in Hz")
        kw["trap_frequencies"] = tuple(_check_number(f"trap_frequencies[{i}]", v, positive=True)
                                       for i, v in enumerate(f))
    if "grid" in raw:
        kw["grid"] = _build_dataclass("grid", GridSettings, _mapping("grid", raw["grid"]),
                                      tuples=("cells", "half_extent"))
    if "solver" in raw:
        kw["solver"] = _build_dataclass("solver", SolverControls, _mapping("solver", raw["solver"]))
    if "scan" in raw:
        kw["scan"] = _build_dataclass("scan", ScanSettings, _mapping("scan", raw["scan"]))
    if "conductors" in raw:
        items = raw["conductors"] or []
        if not isinstance(items, list):
            raise ConfigError("conductors", "expected a list")
        kw["conductors"] = tuple(
            _build_dataclass(f"conductors[{i}]", ConductorBody, _mapping(f"conductors[{i}]", c))
            for i, c in enumerate(items))
    try:
        return Scenario(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError("<root>", str(exc)) from None


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads YAML 1.2 floats such as ``5.8e7``."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                |[0-9][0-9_]*[eE][-+]?[0-9]+
                |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                |[-+]?\.(?:inf|Inf|INF)
                |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.load(fh, Loader=_Loader)
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from None
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"unreadable YAML: {exc}") from None
    return _mapping("<root>", raw)


def load_scenario(path) -> Scenario:
    return scenario_from_dict(load_config(path))


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def scenario_dict(scenario: Scenario) -> dict:
    """Fully resolved scenario as plain JSON-compatible data."""
    return _plain(scenario)


def config_hash(scenario: Scenario) -> str:
    text = json.dumps(scenario_dict(scenario), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
