"""Grid-convergence studies and parameter sweeps over scenarios."""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Sequence

from scipy.optimize import brentq

from .magnetostatics import SolverError
from .scenario import ConfigError, Scenario, scenario_from_dict, set_path
from .trap import TrapModel, axis_frequency


@dataclass(frozen=True)
class Rung:
    cells: int
    dx: float            # core cell size (m)
    f_z: float           # Hz
    B_max: float         # T, at the common applied field


@dataclass(frozen=True)
class ConvergenceReport:
    rungs: tuple[Rung, ...]
    order_f: float | None
    order_B: float | None
    extrapolated_f: float | None
    finest_pair_f: float
    finest_pair_B: float
    threshold: float = 0.01

    @property
    def flagged(self) -> bool:
        return self.finest_pair_f > self.threshold or self.finest_pair_B > self.threshold

    def rung_deviation(self) -> list[tuple[float, float]]:
        """Relative difference of every rung from the finest one (f_z, B_max)."""
        last = self.rungs[-1]
        return [(abs(r.f_z - last.f_z) / abs(last.f_z), abs(r.B_max - last.B_max) / abs(last.B_max))
                for r in self.rungs]

    def as_dict(self) -> dict:
        dev = self.rung_deviation()
        return {
            "rungs": [{"cells": r.cells, "dx_m": r.dx, "f_z_Hz": r.f_z, "B_max_T": r.B_max,
                       "deviation_f": d[0], "deviation_B": d[1]}
                      for r, d in zip(self.rungs, dev)],
            "observed_order_f": self.order_f,
            "observed_order_B": self.order_B,
            "extrapolated_f_z_Hz": self.extrapolated_f,
            "finest_pair_f": self.finest_pair_f,
            "finest_pair_B": self.finest_pair_B,
            "threshold": self.threshold,
            "flagged": self.flagged,
        }


def observed_order(h: Sequence[float], v: Sequence[float]) -> float | None:
    """Order p of ``v = v0 + C h^p`` through three (h, v) samples, coarse to fine.

    Returns None when the differences change sign or vanish, i.e. the
    sequence is not in its asymptotic range.
    """
    h1, h2, h3 = h
    e12 = v[0] - v[1]
    e23 = v[1] - v[2]
    if e12 == 0 or e23 == 0 or (e12 > 0) != (e23 > 0):
        return None
    target = e12 / e23

    def g(p):
        return (h1 ** p - h2 ** p) / (h2 ** p - h3 ** p) - target

    lo, hi = 0.05, 12.0
    if g(lo) * g(hi) > 0:
        return None
    return float(brentq(g, lo, hi, xtol=1e-10))


def _richardson(h: Sequence[float], v: Sequence[float], p: float | None) -> float | None:
    if p is None:
        return None
    r = (h[-2] / h[-1]) ** p
    return float(v[-1] + (v[-1] - v[-2]) / (r - 1))


Probe = Callable[[Scenario], tuple[float, float, float]]


def trap_probe(B_ext: float | None = None, cache_dir=None) -> Probe:
    """f_z and central B_max of the trap at a common applied field.

    The first call fixes the applied field from ``B_max_target`` unless
    ``B_ext`` is given, so every rung solves the same physical problem.
    """
    state: dict[str, float] = {}
    if B_ext is not None:
        state["B_ext"] = B_ext

    def probe(scenario: Scenario) -> tuple[float, float, float]:
        model = TrapModel(scenario, cache_dir)
        B = state.setdefault("B_ext", model.B_ext)
        f = axis_frequency(model, "z", B_ext=B)
        return model.dx, f, model.focusing * B

    return probe


def convergence_study(scenario: Scenario, ladder: Sequence[int], probe: Probe | None = None,
                      threshold: float = 0.01) -> ConvergenceReport:
    """Run ``probe`` on cubic grids of increasing cell count.

    Any rung whose solve fails raises; the study does not skip rungs.
    """
    cells = [int(n) for n in ladder]
    if len(cells) < 3:
        raise ValueError("a convergence ladder needs at least 3 grids")
    if any(b <= a for a, b in zip(cells, cells[1:])):
        raise ValueError("ladder must increase strictly")
    probe = probe or trap_probe()
    rungs = []
    for n in cells:
        sc = dataclasses.replace(scenario, grid=scenario.grid.with_cells(n))
        try:
            dx, f, B = probe(sc)
        except SolverError as exc:
            raise SolverError(f"rung {n}: {exc}", exc.residuals) from exc
        rungs.append(Rung(n, dx, f, B))
    h = [r.dx for r in rungs[-3:]]
    fz = [r.f_z for r in rungs[-3:]]
    Bm = [r.B_max for r in rungs[-3:]]
    p_f = observed_order(h, fz) if all(math.isfinite(v) for v in fz) else None
    p_B = observed_order(h, Bm)

    def rel(a, b):
        return abs(a - b) / abs(b) if b != 0 else (0.0 if a == b else math.inf)

    pair_f = rel(fz[-2], fz[-1]) if all(math.isfinite(v) for v in fz[-2:]) else math.inf
    return ConvergenceReport(tuple(rungs), p_f, p_B, _richardson(h, fz, p_f), pair_f,
                             rel(Bm[-2], Bm[-1]), threshold)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    path: str
    values: tuple[Any, ...]
    threads: int = 1

    def __post_init__(self) -> None:
        if not self.values:
            raise ConfigError("--values", "a sweep needs at least one value")
        if self.threads < 1:
            raise ConfigError("--threads", "must be at least 1")


def sweep_scenarios(raw: dict, spec: SweepSpec) -> list[Scenario]:
    """One scenario per sweep value, validated before any work starts.

    Configured trap frequencies describe the base point; when the sweep moves
    ``geometry.a`` or ``B_max_target`` they are rescaled with ``f ~ B_max/a``
    unless the sweep sets the frequencies itself.
    """
    base = scenario_from_dict(raw)
    out = []
    for v in spec.values:
        sc = scenario_from_dict(set_path(raw, spec.path, v))
        if (base.trap_frequencies is not None and sc.trap_frequencies == base.trap_frequencies
                and not spec.path.startswith("trap_frequencies")):
            scale = (base.geometry.a / sc.geometry.a) * (sc.B_max_target / base.B_max_target)
            sc = sc.with_frequencies([f * scale for f in base.trap_frequencies])
        out.append(sc)
    return out


def run_sweep(scenarios: Sequence[Scenario], fn: Callable[[Scenario], Any], threads: int = 1
              ) -> list[Any]:
    """Evaluate ``fn`` on every point; results keep the input order."""
    if threads <= 1:
        return [fn(s) for s in scenarios]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, scenarios))
