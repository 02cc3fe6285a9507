"""Force-noise budget at the vertical trap frequency.

Technical force noise from relative field fluctuations is compared with the
thermal (Brownian) force density.  A relative fluctuation ``dB/B`` is read
as a narrowband amplitude in ``bandwidth`` hertz (1 Hz by default), so the
equivalent density is ``dF / sqrt(bandwidth)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .materials import CONSTANTS


class LinearizationWarning(UserWarning):
    pass


def thermal_force_density(m: float, omega: float, T: float, Q: float) -> float:
    """Brownian force amplitude spectral density (N/sqrt(Hz))."""
    for name, v in (("m", m), ("omega", omega), ("T", T), ("Q", Q)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    if math.isinf(Q):
        return 0.0
    return math.sqrt(4.0 * CONSTANTS.kB * T * m * omega / Q)


def magnetic_force_fluctuation(F_equilibrium: float, dB_over_B: float) -> float:
    """Force fluctuation (N) from a relative field fluctuation, ``2 dB/B F``."""
    if dB_over_B < 0:
        raise ValueError("dB_over_B must be non-negative")
    if dB_over_B >= 0.1:
        warnings.warn(f"dB/B = {dB_over_B} is too large for the linearised force response",
                      LinearizationWarning, stacklevel=2)
    return 2.0 * dB_over_B * F_equilibrium


class NoiseEntry(NamedTuple):
    source: str
    density: float        # N / sqrt(Hz)
    technical: bool


@dataclass(frozen=True)
class NoiseBudget:
    entries: tuple[NoiseEntry, ...]
    bandwidth: float = 1.0
    notes: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        for e in self.entries:
            if not e.density >= 0:
                raise ValueError("noise densities must be non-negative")

    @property
    def thermal(self) -> float:
        return sum(e.density for e in self.entries if not e.technical)

    @property
    def feasible(self) -> bool:
        th = self.thermal
        return all(e.density <= th for e in self.entries if e.technical)


def assemble_noise_budget(mass: float, omega: float, T: float, Q_total: float,
                          dB_levels: Iterable[float], bandwidth: float = 1.0,
                          extra: Iterable[tuple[str, float]] = (),
                          g: float = CONSTANTS.g) -> NoiseBudget:
    """Thermal line plus one magnetic line per relative fluctuation level.

    The sphere sits at its levitation point, so the static force is ``m g``.
    ``extra`` adds technical lines given directly as densities.
    """
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    entries = [NoiseEntry("thermal", thermal_force_density(mass, omega, T, Q_total), False)]
    F_eq = mass * g
    for level in dB_levels:
        dF = magnetic_force_fluctuation(F_eq, level)
        entries.append(NoiseEntry(f"magnetic_dB_{level:.0e}", dF / math.sqrt(bandwidth), True))
    for label, density in extra:
        entries.append(NoiseEntry(label, float(density), True))
    note = f"magnetic lines use a {bandwidth:g} Hz bandwidth convention"
    return NoiseBudget(tuple(entries), bandwidth, (note,))


def feasible_per_level(budget: NoiseBudget) -> dict[str, bool]:
    """Feasibility of each technical line on its own against the thermal line."""
    th = budget.thermal
    return {e.source: e.density <= th for e in budget.entries if e.technical}


def crossing_diameter(rho: float, T: float, Q: float, dB_over_B: float, f_times_a: float,
                      bandwidth: float = 1.0, g: float = CONSTANTS.g) -> float:
    """Sphere diameter (m) where the magnetic line meets the thermal line.

    Uses ``f_z = f_times_a / a``: the magnetic line grows as ``a^3`` and the
    thermal line as ``a``, so below the returned size the budget is feasible.
    """
    # (2 dB rho V g)^2 / bw = 4 kB T rho V omega / Q with V = 4/3 pi a^3, omega = 2 pi f a^-1 a
    # -> a^4 = kB T * 2 pi f_times_a * bw / (Q * dB^2 * rho * (4/3) pi g^2)
    if not dB_over_B > 0:
        return math.inf
    a4 = (CONSTANTS.kB * T * 2 * math.pi * f_times_a * bandwidth
          / (Q * dB_over_B ** 2 * rho * (4.0 / 3.0) * math.pi * g * g))
    return 2.0 * a4 ** 0.25


def verify_linearization(scenario, dB_over_B: float, *, model=None, position=None,
                         tolerance: float = 1e-12) -> float:
    """Relative change of the solver force when the applied field grows by ``dB_over_B``.

    Both solves start cold at ``tolerance`` so the difference reflects the
    field model, not solver noise.  ``position`` defaults to one core cell
    below the hole centre, where the vertical force is non-zero.
    """
    import dataclasses

    import numpy as np

    from .forces import force_stress_tensor
    from .magnetostatics import solve
    from .trap import TrapModel

    if dB_over_B < 0:
        raise ValueError("dB_over_B must be non-negative")
    model = model or TrapModel(scenario)
    if dB_over_B == 0:
        return 0.0
    pos = np.array([0.0, 0.0, -model.dx]) if position is None else np.asarray(position, float)
    ctl = dataclasses.replace(scenario.solver, tolerance=min(tolerance, scenario.solver.tolerance))
    radius = model.surface_radius([pos])
    branch = model.solve_at(pos).branch
    forces = []
    for B in (model.B_ext, model.B_ext * (1.0 + dB_over_B)):
        sol = solve(scenario.geometry, scenario.ferromagnet, pos, B, ctl, model.grid,
                    branch=branch, background=model.background)
        forces.append(force_stress_tensor(sol, pos, scenario.geometry.a, scenario.quadrature_order,
                                          geom=scenario.geometry, surface_radius=radius).F[2])
    return (forces[1] - forces[0]) / forces[0]
