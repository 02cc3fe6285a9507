"""Mechanical Q-factor estimates for the levitated sphere.

Loss channels are independent and combine reciprocally.  The eddy-current
model is first order and quasi-static: the sphere is a point dipole moving
along z, the induced electric field in a nearby conductor is the time
derivative of the dipole vector potential, and the cycle loss is the
volume and time integral of ``sigma |E|^2``.  Screening of the dipole field
by the superconductor is ignored, which overestimates the loss.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .geometry import _stretched_tail
from .materials import AIR_MOLAR_MASS, CONSTANTS, MU0, magnetization


class ModelValidityWarning(UserWarning):
    """A model is being used outside the regime where it is trustworthy."""


@dataclass(frozen=True)
class ConductorBody:
    """Axisymmetric conducting cylinder, optionally with a coaxial bore.

    ``placement="below"`` puts the top face ``d_pl`` under the lower face of
    the superconducting disk; ``placement="centered"`` centres the body on
    the trap (a coil bobbin around the disk, bore diameter ``bore``).
    """
    sigma: float
    radius: float
    thickness: float
    d_pl: float = 0.0
    bore: float = 0.0
    placement: str = "below"
    label: str = "conductor"

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not self.radius > 0 or not self.thickness > 0:
            raise ValueError("conductor dimensions must be positive")
        if self.d_pl < 0 or self.bore < 0:
            raise ValueError("d_pl and bore must be non-negative")
        if not self.bore / 2 < self.radius:
            raise ValueError("bore must be narrower than the body")
        if self.placement not in ("below", "centered"):
            raise ValueError(f"unknown placement {self.placement!r}")

    def z_range(self, disk_height: float) -> tuple[float, float]:
        if self.placement == "centered":
            return -self.thickness / 2, self.thickness / 2
        top = -disk_height / 2 - self.d_pl
        return top - self.thickness, top


class BudgetEntry(NamedTuple):
    mechanism: str
    Q: float


@dataclass(frozen=True)
class DissipationBudget:
    entries: tuple[BudgetEntry, ...]

    @property
    def Q_total(self) -> float:
        return 1.0 / sum(1.0 / e.Q for e in self.entries)

    def rows(self) -> list[tuple[str, float]]:
        return [(e.mechanism, e.Q) for e in self.entries] + [("total", self.Q_total)]


def combine(entries: Iterable[tuple[str, float]]) -> DissipationBudget:
    """Reciprocal sum of independent loss channels."""
    items = tuple(BudgetEntry(str(m), float(q)) for m, q in entries)
    if not items:
        raise ValueError("a budget needs at least one entry")
    for e in items:
        if not e.Q > 0:
            raise ValueError(f"Q of {e.mechanism!r} must be positive")
    return DissipationBudget(items)


# ---------------------------------------------------------------------------
# gas damping
# ---------------------------------------------------------------------------

def gas_vacuum_q(rho: float, a: float, omega: float, P: float, T: float,
                 molar_mass: float = AIR_MOLAR_MASS) -> float:
    """Free-molecular damping limit of a sphere in a dilute gas."""
    if not P > 0 or not T > 0:
        raise ValueError("pressure and temperature must be positive")
    m_g = molar_mass / CONSTANTS.NA
    return math.pi * rho / 6.0 * math.sqrt(3.0 * CONSTANTS.kB * T / m_g) * a * omega / P


def squeeze_gap_factor(a: float, r: float) -> float:
    """Mean squared wall distance of a sphere in a coaxial cylinder.

    Closed form of ``(1/2a) int_{-a}^{a} (r - sqrt(a^2 - z^2))^2 dz``.
    """
    if not r > a > 0:
        raise ValueError("need r > a > 0")
    return r * r + 2.0 / 3.0 * a * a - math.pi / 2.0 * a * r


def gas_squeezed_q(rho: float, a: float, r: float, omega: float, P: float, T: float,
                   molar_mass: float = AIR_MOLAR_MASS) -> float:
    """Squeezed-film damping limit of a sphere inside a tight cylinder."""
    if not P > 0 or not T > 0:
        raise ValueError("pressure and temperature must be positive")
    denom = squeeze_gap_factor(a, r)
    if not denom > 0:
        raise ValueError("non-positive gap factor; check r > a")
    return (16.0 * rho / 3.0 * math.sqrt(CONSTANTS.R * T / molar_mass)
            * a * a * (r - a) / denom * omega / P)


def q_gas_vacuum(scenario, P: float, T: float) -> float:
    """Vacuum gas damping at the vertical trap frequency of ``scenario``."""
    return gas_vacuum_q(scenario.ferromagnet.rho, scenario.geometry.a, scenario.omega("z"), P, T)


def q_gas_squeezed(scenario, P: float, T: float) -> float:
    """Squeezed-film damping, driven at the y trap frequency."""
    g = scenario.geometry
    return gas_squeezed_q(scenario.ferromagnet.rho, g.a, g.r, scenario.omega("y"), P, T)


# ---------------------------------------------------------------------------
# eddy currents
# ---------------------------------------------------------------------------

def q_eddy_mixed_state(Q_normal: float, rho_n: float) -> float:
    """Scale a normal-state eddy Q by the normal-core volume fraction."""
    if not 0 < rho_n <= 1:
        raise ValueError("rho_n must lie in (0, 1]")
    return Q_normal / rho_n


def skin_depth(omega: float, sigma: float) -> float:
    return math.sqrt(2.0 / (omega * MU0 * sigma))


@dataclass(frozen=True)
class CylinderMesh:
    rho: np.ndarray       # cell centres
    phi: np.ndarray
    z: np.ndarray
    volume: np.ndarray    # (nrho, nphi, nz)


def _graded(start: float, stop: float, n: int, h0: float, from_end: bool = False) -> np.ndarray:
    if from_end:
        nodes = _stretched_tail(-stop, -start, h0, n)
        return -nodes[::-1]
    return _stretched_tail(start, stop, h0, n)


def conductor_mesh(body: ConductorBody, disk_height: float, n_rho: int, n_phi: int,
                   n_z: int) -> CylinderMesh:
    """Cylindrical mesh graded towards the trap centre."""
    z_lo, z_hi = body.z_range(disk_height)
    r_in = body.bore / 2
    if body.placement == "below":
        scale = max(abs(z_hi), 1e-12)
        zn = _graded(z_lo, z_hi, n_z, scale / 8, from_end=True)
        rn = _graded(r_in, body.radius, n_rho, max(scale, r_in) / 8)
    else:
        scale = max(r_in, 1e-12)
        half = _graded(0.0, z_hi, n_z // 2, scale / 8)
        zn = np.concatenate([-half[:0:-1], half])
        rn = _graded(r_in, body.radius, n_rho, scale / 8)
    pn = np.linspace(0.0, 2 * math.pi, n_phi + 1)
    rc = 0.5 * (rn[1:] + rn[:-1])
    zc = 0.5 * (zn[1:] + zn[:-1])
    pc = 0.5 * (pn[1:] + pn[:-1])
    # exact annular-sector volumes
    area = 0.5 * (rn[1:] ** 2 - rn[:-1] ** 2)
    vol = area[:, None, None] * np.diff(pn)[None, :, None] * np.diff(zn)[None, None, :]
    return CylinderMesh(rc, pc, zc, vol)


def eddy_cycle_loss(m_dip: float, omega: float, amplitude: float, mesh: CylinderMesh,
                    sigma: float, slots: int = 100,
                    orientation: tuple[float, float, float] = (0.0, 0.0, 1.0)) -> float:
    """Energy (J) dissipated per oscillation cycle of a dipole moving along z."""
    R, P, Z = np.meshgrid(mesh.rho, mesh.phi, mesh.z, indexing="ij")
    pts = np.stack([R * np.cos(P), R * np.sin(P), Z], axis=-1).reshape(-1, 3)
    vol = mesh.volume.ravel()
    m = m_dip * np.asarray(orientation, dtype=float)
    period = 2 * math.pi / omega
    dt = period / slots
    total = 0.0
    for j in range(slots):
        t = j * dt
        zd = amplitude * math.sin(omega * t)
        vz = amplitude * omega * math.cos(omega * t)
        Rv = pts - np.array([0.0, 0.0, zd])
        r2 = np.einsum("ij,ij->i", Rv, Rv)
        r3 = r2 ** 1.5
        r5 = r2 * r3
        # d/dz_d of R / |R|^3
        dgrad = -np.array([0.0, 0.0, 1.0])[None, :] / r3[:, None] + 3.0 * Rv * (Rv[:, 2] / r5)[:, None]
        dA = MU0 / (4 * math.pi) * np.cross(m, dgrad)
        E2 = np.einsum("ij,ij->i", dA, dA) * vz * vz
        total += dt * sigma * float(np.dot(E2, vol))
    return total


def q_eddy_from_moment(m_dip: float, mass: float, omega: float, body: ConductorBody,
                       disk_height: float, amplitude: float, cycles_resolution: int = 100,
                       tol: float = 0.02, max_levels: int = 4) -> float:
    """Eddy Q of one conductor with mesh refinement until the loss settles."""
    if cycles_resolution < 100:
        raise ValueError("at least 100 time slots per cycle are required")
    if not amplitude > 0:
        raise ValueError("amplitude must be positive")
    if body.sigma == 0:
        return math.inf
    delta = skin_depth(omega, body.sigma)
    if delta < body.thickness:
        warnings.warn(
            f"{body.label}: skin depth {delta:.3g} m below thickness {body.thickness:.3g} m, "
            "quasi-static first-order model out of validity", ModelValidityWarning, stacklevel=2)
    n_rho, n_phi, n_z = 32, 64, 8
    loss = None
    for _ in range(max_levels):
        mesh = conductor_mesh(body, disk_height, n_rho, n_phi, n_z)
        new = eddy_cycle_loss(m_dip, omega, amplitude, mesh, body.sigma, cycles_resolution)
        if loss is not None and abs(new - loss) <= tol * abs(new):
            loss = new
            break
        loss = new
        n_rho, n_z = 2 * n_rho, 2 * n_z
    else:
        warnings.warn(f"{body.label}: eddy loss not settled after {max_levels} meshes",
                      ModelValidityWarning, stacklevel=2)
    kinetic = 0.5 * mass * amplitude ** 2 * omega ** 2
    return 2 * math.pi * kinetic / loss if loss > 0 else math.inf


def q_eddy_conductor(scenario, body: ConductorBody, amplitude: float | None = None,
                     cycles_resolution: int = 100) -> float:
    """Eddy Q of ``body`` for the sphere of ``scenario`` at its B_max target."""
    g = scenario.geometry
    fm = scenario.ferromagnet
    V = 4.0 / 3.0 * math.pi * g.a ** 3
    m_dip = magnetization(fm, scenario.B_max_target) * V
    amp = 1e-3 * g.a if amplitude is None else amplitude
    return q_eddy_from_moment(m_dip, fm.rho * V, scenario.omega("z"), body, g.h, amp,
                              cycles_resolution)
