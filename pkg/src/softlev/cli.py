"""Command line front end: ``softlev <command> --config scenario.yaml --out DIR``.

Every command writes its artifacts plus ``manifest.json`` (config hash, code
version, grid, solver residuals and a digest of every output file).  Failures
write ``error.json`` and exit non-zero: 2 for configuration problems, 3 when
the field solver does not converge, 1 for anything else.

CSV files start with one ``#`` comment line naming the schema version and
the config hash; the column order after it is fixed.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import warnings
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .dissipation import (ConductorBody, combine, q_eddy_conductor,
                          q_eddy_from_moment, q_eddy_mixed_state, q_gas_squeezed, q_gas_vacuum)
from .geometry import effective_radius, validate
from .magnetostatics import (SolverError, axial_profile, material_hash, net_flux,
                             superconductor_normal_flux, write_cache)
from .materials import (CONSTANTS, Regime, classify_regime, magnetization, vortex_lattice)
from .noise import assemble_noise_budget, crossing_diameter, feasible_per_level
from .scenario import (ConfigError, Scenario, config_hash, load_config, scenario_dict,
                       scenario_from_dict)
from .studies import SweepSpec, convergence_study, run_sweep, sweep_scenarios, trap_probe
from .trap import ScanError, TrapModel, characterize, fit_axis, scan_potential

log = logging.getLogger("softlev")

CACHE_ENV = "SOFTLEV_CACHE_DIR"
SCHEMA_VERSION = 1

COLUMNS = {
    "scan": ("axis", "offset_over_a", "energy_J", "force_N"),
    "budget": ("mechanism", "Q"),
    "noise": ("size_m", "source", "force_density_N_per_sqrtHz", "feasible"),
    "profile": ("z_m", "Bz_T"),
    "convergence": ("cells", "dx_m", "f_z_Hz", "B_max_T"),
}
SWEEP_COLUMNS = {
    "feasibility": ("check", "passed"),
    "characterize": ("f_x_Hz", "f_y_Hz", "f_z_Hz", "convex_x", "convex_y", "convex_z", "stable"),
    "qbudget": ("size_m", "B_max_T", "mechanism", "Q"),
    "noise": ("size_m", "source", "force_density_N_per_sqrtHz", "feasible"),
}


class ConsistencyError(ConfigError):
    pass


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(kind: str, columns: Sequence[str], rows, chash: str) -> str:
    buf = io.StringIO()
    buf.write(f"# softlev-{kind}/{SCHEMA_VERSION} config_hash={chash}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def json_text(data) -> str:
    return json.dumps(_json_safe(data), indent=2, sort_keys=True) + "\n"


class Run:
    """Collects artifacts of one command and writes them with a manifest."""

    def __init__(self, command: str, out: Path, scenario: Scenario | None):
        self.command = command
        self.out = out
        self.scenario = scenario
        self.hash = config_hash(scenario) if scenario is not None else None
        self.files: dict[str, str] = {}
        self.extra: dict[str, Any] = {}
        self.models: list[TrapModel] = []

    def write(self, name: str, text: str) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text, encoding="utf-8")
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()

    def write_bytes(self, name: str, path: Path) -> None:
        self.files[name] = hashlib.sha256(path.read_bytes()).hexdigest()

    def csv(self, name: str, kind: str, columns, rows) -> None:
        self.write(name, csv_text(kind, columns, rows, self.hash))

    def json(self, name: str, data: dict) -> None:
        self.write(name, json_text({"config_hash": self.hash, **data}))

    def model(self, scenario: Scenario) -> TrapModel:
        m = TrapModel(scenario, os.environ.get(CACHE_ENV) or None)
        self.models.append(m)
        return m

    def manifest(self) -> dict:
        grids = []
        residuals = []
        for m in self.models:
            spec = m.grid.spec
            grids.append({"cells": list(spec.cells), "half_extent_m": list(spec.half_extent),
                          "refinement": spec.refinement, "core_dx_m": m.dx})
            residuals.append(m.residual_summary())
        worst = max((r["max_residual"] for r in residuals), default=None)
        return {
            "command": self.command,
            "config_hash": self.hash,
            "version": __version__,
            "schema_version": SCHEMA_VERSION,
            "grids": grids,
            "max_residual": worst,
            "residuals": residuals,
            "outputs": dict(sorted(self.files.items())),
            **self.extra,
        }

    def finish(self) -> None:
        text = json_text(self.manifest())
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "manifest.json").write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# building blocks shared by single runs and sweeps
# ---------------------------------------------------------------------------

def feasibility_report(scenario: Scenario) -> dict:
    geom = scenario.geometry
    sc = scenario.superconductor
    fm = scenario.ferromagnet
    rep = validate(geom)
    regime = classify_regime(sc, scenario.B_max_target, scenario.temperature)
    eff = effective_radius(geom, sc)
    M = magnetization(fm, scenario.B_max_target)
    data = {
        "geometry": {"violations": rep.violations, "warnings": rep.warnings,
                     "r_over_a": geom.r / geom.a, "h_over_a": geom.h / geom.a,
                     "theta_deg": math.degrees(geom.theta)},
        "regime": {"name": regime.name, "usable": regime.usable, "Hc1_T": regime.Hc1,
                   "Hvs_T": regime.Hvs, "temperature_K": scenario.temperature,
                   "B_max_T": scenario.B_max_target},
        "london": {"effective_radius_m": eff.radius, "effective_r_over_a": eff.radius / geom.a,
                   "trap_lost": eff.trap_lost},
        "magnetization": {"M_A_per_m": M, "saturated": M >= fm.M_sat, "B_cross_T": fm.B_cross,
                          "levitation_threshold_T_per_m": fm.rho * CONSTANTS.g / M if M > 0 else None},
    }
    if regime.regime is Regime.VORTEX_SOLID:
        vl = vortex_lattice(sc, scenario.B_max_target)
        data["vortex_lattice"] = {"spacing_m": vl.spacing, "normal_fraction": vl.normal_fraction,
                                  "valid": vl.valid}
    checks = {
        "geometry_valid": rep.ok,
        "regime_usable": regime.usable,
        "london_radius_ok": not eff.trap_lost,
    }
    data["checks"] = checks
    data["all_pass"] = all(checks.values())
    return data


def with_frequencies(scenario: Scenario, run: Run, threads: int) -> tuple[Scenario, str]:
    if scenario.trap_frequencies is not None:
        return scenario, "config"
    ch = characterize(scenario, model=run.model(scenario), threads=threads)
    if any(f is None for f in ch.f):
        raise ScanError("trap frequencies unavailable: " + "; ".join(ch.diagnostics), float("nan"))
    return scenario.with_frequencies(ch.f), "characterize"


def disk_body(scenario: Scenario) -> ConductorBody:
    g = scenario.geometry
    return ConductorBody(sigma=scenario.superconductor.sigma_n, radius=g.outer_radius,
                         thickness=g.h, bore=2 * g.r, placement="centered",
                         label=f"{scenario.superconductor.name}_normal_cores")


def dissipation_entries(scenario: Scenario) -> list[tuple[str, float]]:
    P, T = scenario.pressure, scenario.temperature
    entries = [("gas_vacuum", q_gas_vacuum(scenario, P, T)),
               ("gas_squeezed", q_gas_squeezed(scenario, P, T))]
    for body in scenario.conductors:
        Q = q_eddy_conductor(scenario, body, scenario.eddy_amplitude, scenario.cycles_resolution)
        if math.isfinite(Q):
            entries.append((f"eddy_{body.label}", Q))
    regime = classify_regime(scenario.superconductor, scenario.B_max_target, T)
    if regime.regime is Regime.VORTEX_SOLID and scenario.superconductor.sigma_n > 0:
        body = disk_body(scenario)
        V = scenario.volume
        m_dip = magnetization(scenario.ferromagnet, scenario.B_max_target) * V
        amp = scenario.eddy_amplitude or 1e-3 * scenario.geometry.a
        Qn = q_eddy_from_moment(m_dip, scenario.mass, scenario.omega("z"), body,
                                scenario.geometry.h, amp, scenario.cycles_resolution)
        rho_n = vortex_lattice(scenario.superconductor, scenario.B_max_target).normal_fraction
        entries.append(("eddy_mixed_state", q_eddy_mixed_state(Qn, min(rho_n, 1.0))))
    if scenario.ferromagnet.magnon_Q_floor is not None:
        entries.append(("magnon_floor", scenario.ferromagnet.magnon_Q_floor))
    return entries


def noise_for(scenario: Scenario, Q_total: float):
    Q = scenario.thermal_Q or Q_total
    return assemble_noise_budget(scenario.mass, scenario.omega("z"), scenario.temperature, Q,
                                 scenario.noise_levels, scenario.noise_bandwidth)


def noise_rows(scenario: Scenario, budget) -> list[tuple]:
    size = 2 * scenario.geometry.a
    per = feasible_per_level(budget)
    rows = []
    for e in budget.entries:
        ok = budget.feasible if not e.technical else per[e.source]
        rows.append((size, e.source, e.density, ok))
    return rows


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_feasibility(scenario: Scenario, args, run: Run) -> int:
    run.json("feasibility.json", feasibility_report(scenario))
    return 0


def cmd_solve(scenario: Scenario, args, run: Run) -> int:
    model = run.model(scenario)
    bg = model.background
    stats = model.axial_stats()
    g = scenario.geometry
    z = np.linspace(-g.h, g.h, 161)
    Bz = axial_profile(bg, z)
    grid = model.grid
    lo = [1, 1, 1]
    hi = [n - 2 for n in grid.shape]
    run.csv("axial_profile.csv", "profile", COLUMNS["profile"], zip(z, Bz))
    box_area = 2 * sum(
        (grid.nodes[i][hi[i] + 1] - grid.nodes[i][lo[i]]) * (grid.nodes[j][hi[j] + 1] - grid.nodes[j][lo[j]])
        for i, j in ((0, 1), (1, 2), (0, 2)))
    run.json("field.json", {
        "B_ext_T": model.B_ext,
        "B_max_T": stats.B_max,
        "focusing": model.focusing,
        "mean_gradient_T_per_m": stats.mean_gradient,
        "uniformity_ratio": stats.uniformity_ratio,
        "field_curvature_T_per_m2": stats.curvature,
        "residual": bg.residual,
        "iterations": bg.iterations,
        "net_flux_relative": abs(net_flux(bg, lo, hi)) / (box_area * stats.B_max),
        "sc_normal_flux_relative": superconductor_normal_flux(bg) / stats.B_max,
    })
    path = run.out / "field.slf"
    run.out.mkdir(parents=True, exist_ok=True)
    write_cache(path, bg, material_hash(scenario_dict(scenario)))
    run.write_bytes("field.slf", path)
    return 0


def cmd_scan(scenario: Scenario, args, run: Run) -> int:
    model = run.model(scenario)
    scan = scan_potential(scenario, args.axis, model=model, threads=args.threads)
    fit = fit_axis(scan, scenario.scan.fit_window, scenario.scan.residual_threshold)
    run.csv("scan.csv", "scan", COLUMNS["scan"], scan.rows())
    run.json("scan.json", {"axis": args.axis, "k_N_per_m": fit.k, "convex": fit.k > 0,
                           "equilibrium_m": fit.equilibrium if fit.k > 0 else None,
                           "fit_residual": fit.residual, "anharmonic": fit.anharmonic})
    return 0


def cmd_characterize(scenario: Scenario, args, run: Run) -> int:
    ch = characterize(scenario, model=run.model(scenario), threads=args.threads)
    rows = [row for scan in ch.scans for row in scan.rows()]
    run.csv("scan.csv", "scan", COLUMNS["scan"], rows)
    run.json("characterization.json", {**ch.as_dict(), "scenario": scenario_dict(scenario)})
    return 0


def cmd_qbudget(scenario: Scenario, args, run: Run) -> int:
    sc, source = with_frequencies(scenario, run, args.threads)
    budget = combine(dissipation_entries(sc))
    run.csv("budget.csv", "budget", COLUMNS["budget"], budget.rows())
    run.json("budget.json", {"Q_total": budget.Q_total, "entries": dict(budget.rows()[:-1]),
                             "trap_frequencies_Hz": list(sc.trap_frequencies),
                             "frequency_source": source})
    return 0


def cmd_noise(scenario: Scenario, args, run: Run) -> int:
    sc, source = with_frequencies(scenario, run, args.threads)
    Q = sc.thermal_Q or combine(dissipation_entries(sc)).Q_total
    nb = noise_for(sc, Q)
    run.csv("noise.csv", "noise", COLUMNS["noise"], noise_rows(sc, nb))
    f_a = sc.trap_frequencies[2] * sc.geometry.a
    run.json("noise.json", {
        "Q_total": Q, "bandwidth_Hz": nb.bandwidth, "notes": list(nb.notes),
        "feasible": nb.feasible, "feasible_per_level": feasible_per_level(nb),
        "crossing_diameter_m": {f"{lvl:.0e}": crossing_diameter(
            sc.ferromagnet.rho, sc.temperature, Q, lvl, f_a, nb.bandwidth)
            for lvl in sc.noise_levels},
        "frequency_source": source,
    })
    return 0


def _sweep_point(emit: str, threads: int, run: Run) -> Callable[[Scenario], list[tuple]]:
    def point(sc: Scenario) -> list[tuple]:
        if emit == "feasibility":
            return sorted(feasibility_report(sc)["checks"].items())
        if emit == "characterize":
            ch = characterize(sc, model=run.model(sc), threads=1)
            return [(*(f if f is not None else float("nan") for f in ch.f), *ch.convex, ch.stable)]
        sc2, _ = with_frequencies(sc, run, 1)
        budget = combine(dissipation_entries(sc2))
        if emit == "qbudget":
            size = 2 * sc2.geometry.a
            return [(size, sc2.B_max_target, m, q) for m, q in budget.rows()]
        return noise_rows(sc2, noise_for(sc2, budget.Q_total))
    return point


def parse_values(text: str) -> tuple:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            out.append(json.loads(item))
        except json.JSONDecodeError:
            raise ConfigError("--values", f"not a number: {item!r}") from None
    return tuple(out)


def cmd_sweep(scenario: Scenario, args, run: Run) -> int:
    if not args.param or args.values is None:
        raise ConfigError("--param", "sweep needs --param and --values")
    spec = SweepSpec(args.param, parse_values(args.values), args.threads)
    points = sweep_scenarios(args.raw_config, spec)
    if not args.force:
        for v, sc in zip(spec.values, points):
            issues = sc.consistency_issues()
            if issues:
                raise ConsistencyError(f"{spec.path}={v}", "; ".join(issues))
    results = run_sweep(points, _sweep_point(args.emit, 1, run), spec.threads)
    rows = [(spec.path, _fmt(v), *row) for v, res in zip(spec.values, results) for row in res]
    run.csv("sweep.csv", f"sweep-{args.emit}", ("param", "value", *SWEEP_COLUMNS[args.emit]), rows)
    run.extra["sweep"] = {"param": spec.path, "values": list(spec.values), "emit": args.emit,
                          "point_hashes": [config_hash(p) for p in points]}
    return 0


def cmd_convergence(scenario: Scenario, args, run: Run) -> int:
    try:
        ladder = [int(v) for v in args.grid_ladder.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("--grid-ladder", "expected comma separated cell counts") from None
    try:
        report = convergence_study(scenario, ladder,
                                   trap_probe(cache_dir=os.environ.get(CACHE_ENV) or None))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("--grid-ladder", str(exc)) from None
    run.csv("convergence.csv", "convergence", COLUMNS["convergence"],
            [(r.cells, r.dx, r.f_z, r.B_max) for r in report.rungs])
    run.json("convergence.json", report.as_dict())
    run.extra["grid_ladder"] = ladder
    return 0


COMMANDS = {
    "feasibility": cmd_feasibility,
    "solve": cmd_solve,
    "scan": cmd_scan,
    "characterize": cmd_characterize,
    "qbudget": cmd_qbudget,
    "noise": cmd_noise,
    "sweep": cmd_sweep,
    "convergence": cmd_convergence,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="softlev", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="scenario YAML file")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--axis", choices=("x", "y", "z"), default="z", help="scan axis")
    p.add_argument("--param", help="dotted scenario path swept by the sweep command")
    p.add_argument("--values", help="comma separated sweep values")
    p.add_argument("--emit", choices=sorted(SWEEP_COLUMNS), default="qbudget",
                   help="what each sweep point computes (default: qbudget)")
    p.add_argument("--grid-ladder", default="64,96,128",
                   help="cells per axis for the convergence study (default: 64,96,128)")
    p.add_argument("--force", action="store_true", help="run despite consistency problems")
    p.add_argument("--threads", type=int, default=1, help="parallel solves (default: 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _fail(out: Path, code: int, payload: dict) -> int:
    text = json_text(payload)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(text, encoding="utf-8")
    except OSError:
        pass
    sys.stderr.write(text)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    if args.threads < 1:
        return _fail(out, 2, {"error": "config", "path": "--threads", "message": "must be >= 1"})
    try:
        args.raw_config = load_config(args.config)
        scenario = scenario_from_dict(args.raw_config)
        issues = scenario.consistency_issues()
        if issues and not args.force and args.command != "feasibility":
            raise ConsistencyError("<scenario>", "; ".join(issues) + " (use --force to override)")
        run = Run(args.command, out, scenario)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            code = COMMANDS[args.command](scenario, args, run)
        messages = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
        for m in messages:
            log.warning(m)
        run.extra["warnings"] = messages
        run.finish()
        return code
    except ConfigError as exc:
        return _fail(out, 2, exc.as_dict())
    except (SolverError, ScanError) as exc:
        payload = {"error": "solver", "message": str(exc),
                   "residuals": [float(r) for r in getattr(exc, "residuals", [])][-20:]}
        if isinstance(exc, ScanError):
            payload["offset_over_a"] = exc.offset
        return _fail(out, 3, payload)
    except Exception as exc:  # noqa: BLE001 - report, never traceback to the user
        log.debug("unhandled", exc_info=True)
        return _fail(out, 1, {"error": type(exc).__name__, "message": str(exc)})


if __name__ == "__main__":
    sys.exit(main())
