"""Forces on the levitated sphere.

Three routes share the +z-up sign convention:

* ``force_stress_tensor`` integrates the Maxwell stress tensor of a solved
  field over a sphere enclosing the ferromagnet (Lebedev quadrature).
* ``force_dipole_gradient`` is the point-dipole levitation force M V dBz/dz.
* ``image_dipole_force`` is the two-wall image model of a point dipole
  between parallel superconducting planes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.integrate import lebedev_rule

from .geometry import TrapGeometry, superconductor_sdf
from .magnetostatics import FieldSolution, sample_B, sample_mu0H
from .materials import MU0

METHODS = ("stress_tensor", "dipole_gradient", "image_dipole")

_LEBEDEV_ORDERS = (3, 5, 7, 9, 11, 13, 15, 17, 19, 21, 23, 25, 27, 29, 31, 35, 41, 47, 53,
                   59, 65, 71, 77, 83, 89, 95, 101, 107, 113, 119, 125, 131)


class QuadratureError(ValueError):
    pass


class ModelDomainError(ValueError):
    pass


@dataclass(frozen=True)
class ForceSample:
    position: tuple[float, float, float]
    F: np.ndarray
    method: str

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown force method {self.method!r}")
        if not np.all(np.isfinite(self.F)):
            raise ValueError("force components must be finite")


@dataclass(frozen=True)
class DipoleModel:
    m_dp: float
    orientation: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self) -> None:
        if self.m_dp < 0:
            raise ValueError("dipole moment must be non-negative")
        if abs(np.linalg.norm(self.orientation) - 1.0) > 1e-9:
            raise ValueError("orientation must be a unit vector")


@lru_cache(maxsize=None)
def sphere_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Lebedev nodes (n, 3) and weights (sum 4 pi) of at least degree ``order``."""
    for deg in _LEBEDEV_ORDERS:
        if deg >= order:
            x, w = lebedev_rule(deg)
            return np.ascontiguousarray(x.T), w
    raise ValueError(f"no Lebedev rule of degree >= {order}")


def default_surface_radius(sol: FieldSolution, geom: TrapGeometry, center) -> float:
    """Integration radius halfway between the sphere and the nearest wall."""
    c = np.asarray(center, dtype=float)
    clearance = float(superconductor_sdf(geom)(c[0:1], c[1:2], c[2:3])[0]) - geom.a
    return geom.a + 0.5 * max(clearance, 0.0)


def shell_radii(geom: TrapGeometry, centers, dx: float, count: int = 8) -> tuple[float, ...]:
    """Integration radii shared by every position in ``centers``.

    The radii span the air gap from two cells outside the sphere to
    1.5 cells short of the nearest wall (at most 2a), where the interpolated
    field is not contaminated by the smoothed material interfaces.  A gap too
    narrow for that band gets the single halfway radius.
    """
    c = np.atleast_2d(np.asarray(centers, dtype=float))
    wall = float(np.min(superconductor_sdf(geom)(c[:, 0], c[:, 1], c[:, 2])))
    if not wall > geom.a:
        raise QuadratureError("sphere touches the superconductor")
    lo, hi = geom.a + 2.0 * dx, min(wall - 1.5 * dx, 2.0 * geom.a)
    if hi - lo < dx or count < 2:
        return (0.5 * (geom.a + min(wall, 3.0 * geom.a)),)
    return tuple(float(r) for r in np.linspace(lo, hi, count))


def force_stress_tensor(sol: FieldSolution, sphere_center, a: float, quadrature_order: int = 131,
                        *, geom: TrapGeometry | None = None,
                        surface_radius: float | Sequence[float] | None = None,
                        normal_only: bool = False) -> ForceSample:
    """Net magnetic force (N) on the body inside a sphere around ``sphere_center``.

    The integration sphere lies in air.  The normal flux density is taken
    from the interpolated B and the tangential part from mu0*H, the two
    components that stay continuous across the ferromagnet surface.  With a
    sequence of radii the surface integrals are averaged; in air they agree
    exactly, so averaging only damps interpolation noise.  The default
    radii come from :func:`shell_radii` when ``geom`` is given.
    ``normal_only`` keeps just the B_n**2 / (2 mu0) pressure term.
    """
    c = np.asarray(sphere_center, dtype=float)
    if surface_radius is None:
        radii = shell_radii(geom, [c], sol.grid.min_spacing()) if geom is not None else (1.2 * a,)
    else:
        radii = tuple(np.atleast_1d(np.asarray(surface_radius, dtype=float)))
    if min(radii) < a:
        raise QuadratureError("integration sphere must enclose the ferromagnet")
    nodes, weights = sphere_rule(quadrature_order)
    F = np.zeros(3)
    for radius in radii:
        F += _surface_force(sol, c, radius, nodes, weights, geom, normal_only)
    return ForceSample(tuple(float(v) for v in c), F / len(radii), "stress_tensor")


def _surface_force(sol, c, radius, nodes, weights, geom, normal_only) -> np.ndarray:
    pts = c + radius * nodes
    if geom is not None:
        d = superconductor_sdf(geom)(pts[:, 0], pts[:, 1], pts[:, 2])
        if np.any(d <= 0):
            raise QuadratureError(
                f"{int(np.sum(d <= 0))} quadrature points fall inside the superconductor "
                f"(surface radius {radius:.3e} m)")
    else:
        idx = _cell_index(sol, pts)
        if np.any(sol.sc_fraction[idx] > 0.5):
            raise QuadratureError("quadrature points fall in superconductor cells")
    B = sample_B(sol, pts)
    Bn = np.einsum("ij,ij->i", B, nodes)
    if normal_only:
        traction = (Bn ** 2 / (2 * MU0))[:, None] * nodes
    else:
        Ht = sample_mu0H(sol, pts)
        Ht = Ht - np.einsum("ij,ij->i", Ht, nodes)[:, None] * nodes
        Bair = Bn[:, None] * nodes + Ht
        B2 = np.einsum("ij,ij->i", Bair, Bair)
        traction = (Bn[:, None] * Bair - 0.5 * B2[:, None] * nodes) / MU0
    return radius ** 2 * np.einsum("i,ij->j", weights, traction)


def _cell_index(sol: FieldSolution, pts: np.ndarray):
    out = []
    for k in range(3):
        x = sol.grid.nodes[k]
        out.append(np.clip(np.searchsorted(x, pts[:, k]) - 1, 0, len(x) - 2))
    return tuple(out)


def force_dipole_gradient(M: float, V: float, dBz_dz: float) -> float:
    """Levitation force M V dBz/dz (N) on a uniformly magnetised sphere."""
    if not V > 0:
        raise ValueError("volume must be positive")
    return M * V * dBz_dz


def single_wall_force(model: DipoleModel, distance: float) -> float:
    """Repulsion (N) of a dipole parallel to one superconducting wall."""
    return 5.0 / (2.0 * math.pi) * MU0 * model.m_dp ** 2 / distance ** 4


def image_dipole_force(model: DipoleModel, hgap: float, dr: float) -> float:
    """Net image force (N) on a dipole displaced by ``dr`` between two walls.

    Walls sit at distance ``hgap`` from the centre line; the result is
    negative for positive ``dr`` (restoring).
    """
    if not hgap > 0:
        raise ValueError("hgap must be positive")
    if abs(dr) >= hgap:
        raise ModelDomainError("displacement reaches the wall")
    return single_wall_force(model, hgap + dr) - single_wall_force(model, hgap - dr)


def image_dipole_stiffness(model: DipoleModel, hgap: float) -> float:
    """Small-displacement spring constant (N/m) of the two-wall image model."""
    return 20.0 / math.pi * MU0 * model.m_dp ** 2 / hgap ** 5


def gradient_force_term(model: DipoleModel, grad_B: np.ndarray) -> np.ndarray:
    """Additive (m . grad) B_ext correction (N); ``grad_B[i, j] = dB_j/dx_i``."""
    m = model.m_dp * np.asarray(model.orientation, dtype=float)
    return np.asarray(grad_B) @ m if np.ndim(grad_B) == 2 else m * grad_B


def sphere_volume(a: float) -> float:
    return 4.0 / 3.0 * math.pi * a ** 3


def sphere_moment(sol: FieldSolution) -> np.ndarray:
    """Total magnetic moment (A m^2) of the ferromagnet in a solution."""
    vol = np.multiply.outer(np.multiply.outer(*sol.grid.widths[:2]), sol.grid.widths[2])
    frac = sol.fm_fraction
    if sol.branch == "saturated":
        Mcell = sol.M
    else:
        Mcell = (sol.mu - 1.0)[..., None] * sol.H * (frac > 0)[..., None]
        # only the ferromagnet share of a mixed cell magnetises
        with np.errstate(invalid="ignore", divide="ignore"):
            share = np.where(sol.mu > 1.0, 1.0, 0.0)
        Mcell = Mcell * share[..., None]
    return np.einsum("ijk,ijkl->l", vol, Mcell)
