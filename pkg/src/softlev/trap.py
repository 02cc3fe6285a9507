"""Potential scans, harmonic characterisation and trap frequencies.

``TrapModel`` owns the grid and the sphere-free background field of one
scenario and hands out solves at arbitrary sphere positions, optionally
backed by an on-disk field cache.  The applied field is chosen so the
empty-hole central field equals ``scenario.B_max_target`` (the problem is
linear without the sphere, so one unit solve fixes the scale).
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .forces import QuadratureError, force_stress_tensor, shell_radii, sphere_moment
from .geometry import Grid, superconductor_sdf
from .magnetostatics import (FieldSolution, SolverError, axial_gradient_stats, read_cache,
                             solve, write_cache)
from .materials import CONSTANTS, magnetization
from .scenario import Scenario, scenario_dict

log = logging.getLogger(__name__)

AXES = {"x": 0, "y": 1, "z": 2}


class UnstableAxisError(ValueError):
    """The field curvature gives no restoring force."""


class ScanError(RuntimeError):
    def __init__(self, message: str, offset: float, residuals: Sequence[float] = ()):
        super().__init__(message)
        self.offset = offset
        self.residuals = list(residuals)


def trap_frequency_from_curvature(M: float, rho: float, d2Bz_dz2: float) -> float:
    """Point-dipole trap frequency (Hz) from the restoring field curvature.

    ``d2Bz_dz2`` is the magnitude of the curvature at a field maximum
    (T/m^2); a negative value means the axis does not trap.
    """
    if d2Bz_dz2 < 0:
        raise UnstableAxisError("negative curvature: unstable axis")
    if not rho > 0 or M < 0:
        raise ValueError("need rho > 0 and M >= 0")
    return math.sqrt(M / rho * d2Bz_dz2) / (2 * math.pi)


# ---------------------------------------------------------------------------
# model workspace
# ---------------------------------------------------------------------------

class TrapModel:
    """Grid, background field and cached sphere solves for one scenario."""

    def __init__(self, scenario: Scenario, cache_dir: str | os.PathLike | None = None):
        self.scenario = scenario
        self.geom = scenario.geometry
        self.grid = Grid(scenario.grid_spec())
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self._lock = threading.Lock()
        self._memo: dict[str, FieldSolution] = {}      # sphere-free solves only
        self._forces: dict[tuple, np.ndarray] = {}
        self.solve_log: list[tuple[str, float, int]] = []   # (key, residual, iterations)
        unit = self._solve(None, 1.0, "none")
        self.focusing = unit.central_field()
        if not self.focusing > 0:
            raise SolverError("no field at the hole centre")
        self.B_ext = scenario.B_max_target / self.focusing
        self.background = self._solve(None, self.B_ext, "none", x0=unit.potential * self.B_ext)

    @property
    def dx(self) -> float:
        """Core cell size (m)."""
        return self.grid.min_spacing()

    def _key(self, center, B_ext: float, branch: str) -> str:
        s = self.scenario
        payload = {
            "geometry": scenario_dict(s)["geometry"],
            "ferromagnet": scenario_dict(s)["ferromagnet"],
            "solver": scenario_dict(s)["solver"],
            "grid": [list(map(float, n)) for n in (self.grid.spec.half_extent,)]
                    + [list(self.grid.spec.cells), self.grid.spec.refinement,
                       self.grid.spec.core_half_extent, self.grid.spec.anchors],
            "center": None if center is None else [float(c).hex() for c in center],
            "B_ext": float(B_ext).hex(),
            "branch": branch,
        }
        text = json.dumps(payload, sort_keys=True, default=repr)
        return hashlib.sha256(text.encode()).hexdigest()

    def _solve(self, center, B_ext: float, branch: str, x0=None) -> FieldSolution:
        key = self._key(center, B_ext, branch)
        with self._lock:
            if key in self._memo:
                return self._memo[key]
        path = self.cache_dir / f"{key}.field" if self.cache_dir else None
        if path is not None and path.exists():
            with self._lock:
                cached = read_cache(path)
            if cached.shape == self.grid.shape and cached.material_hash == bytes.fromhex(key):
                x0 = cached.potential
        s = self.scenario
        kw = dict(background=self.background if center is not None else None)
        if branch == "none":
            sol = solve(self.geom, None, None, B_ext, s.solver, self.grid, x0=x0)
        else:
            sol = solve(self.geom, s.ferromagnet, center, B_ext, s.solver, self.grid,
                        branch=branch, x0=x0, **kw)
        with self._lock:
            self.solve_log.append((key, float(sol.residual), int(sol.iterations)))
            if center is None:
                self._memo[key] = sol
            if path is not None and sol.iterations > 0:
                path.parent.mkdir(parents=True, exist_ok=True)
                tmp = path.with_suffix(".tmp")
                write_cache(tmp, sol, bytes.fromhex(key))
                os.replace(tmp, path)
        return sol

    def solve_at(self, center, B_ext: float | None = None, branch: str = "auto") -> FieldSolution:
        B = self.B_ext if B_ext is None else B_ext
        if branch == "auto":
            from .magnetostatics import sample_B
            nB = float(np.linalg.norm(sample_B(self.background, [center])[0])) * B / self.B_ext
            fm = self.scenario.ferromagnet
            branch = "saturated" if magnetization(fm, nB) >= fm.M_sat else "linear"
        return self._solve(tuple(float(c) for c in center), B, branch)

    def surface_radius(self, centers) -> tuple[float, ...]:
        """Stress-integral radii valid for every position in ``centers``."""
        try:
            return shell_radii(self.geom, centers, self.dx)
        except QuadratureError:
            raise ScanError("sphere touches the superconductor", float("nan")) from None

    def force(self, center, surface_radius, B_ext: float | None = None,
              branch: str = "auto") -> np.ndarray:
        radii = tuple(float(r) for r in np.atleast_1d(surface_radius))
        key = (tuple(float(c) for c in center), radii,
               None if B_ext is None else float(B_ext), branch)
        with self._lock:
            if key in self._forces:
                return self._forces[key].copy()
        sol = self.solve_at(center, B_ext, branch)
        F = force_stress_tensor(sol, center, self.geom.a, self.scenario.quadrature_order,
                                geom=self.geom, surface_radius=radii).F
        with self._lock:
            self._forces[key] = F
        return F.copy()

    def axial_stats(self):
        return axial_gradient_stats(self.background, self.geom.a)

    def residual_summary(self) -> dict:
        """Worst and per-solve residuals in a thread-order independent form."""
        with self._lock:
            log_ = sorted(self.solve_log)
        return {
            "solves": len(log_),
            "max_residual": max((r for _, r, _ in log_), default=0.0),
            "tolerance": self.scenario.solver.tolerance,
            "entries": [{"key": k[:16], "residual": r, "iterations": n} for k, r, n in log_],
        }


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialScan:
    axis: str
    offsets: np.ndarray        # sphere positions along the axis, in units of a
    energy: np.ndarray         # J, relative to the centre sample
    forces: np.ndarray         # (n, 3) N, gravity included when enabled
    a: float

    def __post_init__(self) -> None:
        if np.any(np.diff(self.offsets) <= 0):
            raise ValueError("offsets must be strictly increasing")

    @property
    def axial_force(self) -> np.ndarray:
        return self.forces[:, AXES[self.axis]]

    def rows(self):
        for s, e, f in zip(self.offsets, self.energy, self.axial_force):
            yield self.axis, float(s), float(e), float(f)


def _parallel_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def scan_potential(scenario: Scenario, axis: str, offsets=None, *, model: TrapModel | None = None,
                   threads: int = 1, gravity: bool | None = None) -> PotentialScan:
    """Stress-tensor forces along one axis and the potential they integrate to."""
    if axis not in AXES:
        raise ValueError(f"axis must be one of x, y, z (got {axis!r})")
    model = model or TrapModel(scenario)
    offsets = np.asarray(scenario.scan.offsets() if offsets is None else offsets, dtype=float)
    if np.any(np.diff(offsets) <= 0):
        raise ValueError("offsets must be strictly increasing")
    a = scenario.geometry.a
    k = AXES[axis]
    centers = np.zeros((len(offsets), 3))
    centers[:, k] = offsets * a
    try:
        radius = model.surface_radius(centers)
    except ScanError:
        bad = offsets[np.argmin(superconductor_sdf(model.geom)(*centers.T))]
        raise ScanError("scan leaves the hole", float(bad)) from None

    def one(i):
        try:
            return model.force(centers[i], radius)
        except SolverError as exc:
            raise ScanError(f"solver failed at offset {offsets[i]:+.4f} a: {exc}",
                            float(offsets[i]), exc.residuals) from exc

    F = np.array(_parallel_map(one, range(len(offsets)), threads))
    use_gravity = scenario.scan.gravity if gravity is None else gravity
    if use_gravity:
        F[:, 2] -= scenario.mass * CONSTANTS.g
    s = centers[:, k]
    dE = -0.5 * (F[1:, k] + F[:-1, k]) * np.diff(s)
    E = np.concatenate([[0.0], np.cumsum(dE)])
    E -= E[int(np.argmin(np.abs(offsets)))]
    return PotentialScan(axis, offsets, E, F, a)


# ---------------------------------------------------------------------------
# characterisation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AxisFit:
    k: float                   # N/m
    equilibrium: float         # offset of the energy minimum (m)
    residual: float            # rms fit residual / well depth
    anharmonic: bool


def fit_axis(scan: PotentialScan, window: float, threshold: float) -> AxisFit:
    """Quadratic fit of the scan energy, re-centred on the fitted minimum."""
    s = scan.offsets * scan.a
    E = scan.energy
    half = window * scan.a * (1 + 1e-9)
    centre = 0.0
    coef = None
    for _ in range(2):
        sel = np.abs(s - centre) <= half
        if sel.sum() < 3:
            sel = np.argsort(np.abs(s - centre))[:3]
        coef = np.polyfit(s[sel] - centre, E[sel], 2)
        k = 2 * coef[0]
        if k <= 0:
            break
        shift = -coef[1] / k
        if abs(shift) > half:
            break
        centre += shift
    k = 2 * coef[0]
    resid = E[sel] - np.polyval(coef, s[sel] - centre)
    depth = float(np.ptp(E[sel]))
    rel = float(np.sqrt(np.mean(resid ** 2)) / depth) if depth > 0 else 0.0
    eq = centre if k > 0 else float("nan")
    return AxisFit(float(k), float(eq), rel, rel > threshold)


@dataclass(frozen=True)
class TrapCharacterization:
    k: tuple[float, float, float]
    f: tuple[float | None, float | None, float | None]
    convex: tuple[bool, bool, bool]
    levitation_ok: bool
    uniformity_ok: bool
    B_max: float
    B_ext: float
    mean_gradient: float
    levitation_threshold: float
    field_curvature: float
    M_constitutive: float
    M_effective: float
    f_z_point_dipole: float | None
    equilibrium: tuple[float, float, float]
    fit_residual: tuple[float, float, float]
    diagnostics: tuple[str, ...] = ()
    scans: tuple[PotentialScan, ...] = field(default=(), repr=False, compare=False)

    @property
    def stable(self) -> bool:
        return all(self.convex) and self.levitation_ok

    def as_dict(self) -> dict:
        def num(v):
            if v is None or (isinstance(v, float) and not math.isfinite(v)):
                return None
            return v
        return {
            "k_N_per_m": dict(zip("xyz", map(num, self.k))),
            "f_Hz": dict(zip("xyz", map(num, self.f))),
            "convex": dict(zip("xyz", self.convex)),
            "stable": self.stable,
            "levitation_ok": self.levitation_ok,
            "uniformity_ok": self.uniformity_ok,
            "B_max_T": self.B_max,
            "B_ext_T": self.B_ext,
            "mean_gradient_T_per_m": self.mean_gradient,
            "levitation_threshold_T_per_m": self.levitation_threshold,
            "field_curvature_T_per_m2": self.field_curvature,
            "M_constitutive_A_per_m": self.M_constitutive,
            "M_effective_A_per_m": self.M_effective,
            "f_z_point_dipole_Hz": num(self.f_z_point_dipole),
            "equilibrium_m": dict(zip("xyz", map(num, self.equilibrium))),
            "fit_residual": dict(zip("xyz", self.fit_residual)),
            "diagnostics": list(self.diagnostics),
        }


def characterize(scenario: Scenario, *, model: TrapModel | None = None, threads: int = 1,
                 axes: Sequence[str] = ("x", "y", "z")) -> TrapCharacterization:
    model = model or TrapModel(scenario)
    cfg = scenario.scan
    geom = scenario.geometry
    fm = scenario.ferromagnet
    stats = model.axial_stats()
    B_max = stats.B_max
    M_c = magnetization(fm, B_max)
    threshold = fm.rho * CONSTANTS.g / M_c if M_c > 0 else math.inf
    levitation_ok = stats.mean_gradient > threshold
    uniformity_ok = stats.mean_gradient <= cfg.uniformity_factor * B_max / geom.a

    centre_sol = model.solve_at((0.0, 0.0, 0.0))
    M_eff = float(np.linalg.norm(sphere_moment(centre_sol))) / scenario.volume
    try:
        f_eq5 = trap_frequency_from_curvature(M_eff, fm.rho, stats.curvature)
    except UnstableAxisError:
        f_eq5 = None

    ks, fs, convex, eqs, res, diags, scans = [], [], [], [], [], [], []
    for name in ("x", "y", "z"):
        if name not in axes:
            ks.append(float("nan")); fs.append(None); convex.append(False)
            eqs.append(float("nan")); res.append(float("nan"))
            continue
        scan = scan_potential(scenario, name, model=model, threads=threads)
        scans.append(scan)
        fit = fit_axis(scan, cfg.fit_window, cfg.residual_threshold)
        ks.append(fit.k)
        eqs.append(fit.equilibrium)
        res.append(fit.residual)
        convex.append(fit.k > 0)
        if fit.anharmonic:
            diags.append(f"anharmonic {name}: fit residual {fit.residual:.3g} of well depth")
            fs.append(None)
        elif fit.k > 0:
            fs.append(math.sqrt(fit.k / scenario.mass) / (2 * math.pi))
        else:
            diags.append(f"non-convex {name}: k = {fit.k:.4g} N/m")
            fs.append(None)
    if not levitation_ok:
        diags.append(f"mean gradient {stats.mean_gradient:.4g} T/m below rho g / M = {threshold:.4g}")
    if not uniformity_ok:
        diags.append("field too non-uniform over the sphere for single-domain magnetisation")
    return TrapCharacterization(
        k=tuple(ks), f=tuple(fs), convex=tuple(convex), levitation_ok=levitation_ok,
        uniformity_ok=uniformity_ok, B_max=B_max, B_ext=model.B_ext,
        mean_gradient=stats.mean_gradient, levitation_threshold=threshold,
        field_curvature=stats.curvature, M_constitutive=M_c, M_effective=M_eff,
        f_z_point_dipole=f_eq5, equilibrium=tuple(eqs), fit_residual=tuple(res),
        diagnostics=tuple(diags), scans=tuple(scans))


def axis_frequency(model: TrapModel, axis: str = "z", B_ext: float | None = None,
                   branch: str = "auto", cells: int = 1) -> float:
    """Trap frequency (Hz) from a central difference of ``cells`` core cells."""
    k = AXES[axis]
    d = cells * model.dx
    plus = np.zeros(3)
    plus[k] = d
    r = model.surface_radius([plus, -plus])
    Fp = model.force(plus, r, B_ext, branch)[k]
    Fm = model.force(-plus, r, B_ext, branch)[k]
    stiff = -(Fp - Fm) / (2 * d)
    if stiff <= 0:
        return float("nan")
    return math.sqrt(stiff / model.scenario.mass) / (2 * math.pi)


# ---------------------------------------------------------------------------
# frequency against field
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencyCurve:
    B_max: np.ndarray
    f_linear: np.ndarray
    f_saturated: np.ndarray
    crossover: float | None          # B_max where the branches meet (T)

    @property
    def f(self) -> np.ndarray:
        return np.fmin(self.f_linear, self.f_saturated)

    @property
    def linear_slope(self) -> float:
        """Low-field slope (Hz/T) of the permeability branch."""
        return float(self.f_linear[0] / self.B_max[0])


def frequency_vs_field(scenario: Scenario, B_values, *, model: TrapModel | None = None
                       ) -> FrequencyCurve:
    """Vertical trap frequency of both constitutive branches against B_max.

    The permeability branch is homogeneous in the field, so one solve pair
    at the scenario field fixes its slope.  The rigid-magnetisation branch is
    re-solved at every field.  The realised frequency is the lower branch.
    """
    B = np.asarray(B_values, dtype=float)
    if B.size == 0 or np.any(B <= 0) or np.any(np.diff(B) <= 0):
        raise ValueError("B_values must be positive and ascending")
    model = model or TrapModel(scenario)
    f_ref = axis_frequency(model, "z", branch="linear")
    f_lin = f_ref * B / scenario.B_max_target
    f_sat = np.array([axis_frequency(model, "z", B_ext=b / model.focusing, branch="saturated")
                      for b in B])
    diff = f_lin - f_sat
    cross = None
    for i in range(len(B) - 1):
        if diff[i] < 0 <= diff[i + 1]:
            t = -diff[i] / (diff[i + 1] - diff[i])
            cross = float(B[i] + t * (B[i + 1] - B[i]))
            break
    return FrequencyCurve(B, f_lin, f_sat, cross)
