"""Trap geometry, validation, London correction and structured grids.

Coordinates: the origin sits at the centre of the superconductor hole, +z is
up (along the applied field), and the slit is a wedge of full angle ``theta``
centred on the +x axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .materials import SuperconductorMaterial

# Beyond this corrected r/a the potentials of the radius scan flatten out.
TRAP_LOSS_RATIO = 2.2


@dataclass(frozen=True)
class TrapGeometry:
    a: float                           # sphere radius (m)
    r: float                           # hole radius (m)
    h: float                           # disk height (m)
    theta: float                       # slit angle (rad)
    disk_outer_radius: float | None = None
    d_pl: float | None = None          # plate distance below the disk (m)
    plate_thickness: float | None = None
    d_coil: float = 40e-3              # coil bore diameter (m)
    coil_length: float = 100e-3

    @property
    def outer_radius(self) -> float:
        if self.disk_outer_radius is None:
            return 10.0 * self.r
        return self.disk_outer_radius

    @classmethod
    def optimal(cls, a: float, **kw) -> "TrapGeometry":
        """The r/a = 1.4, h/a = 4, 10 degree slit design point."""
        return cls(a=a, r=1.4 * a, h=4.0 * a, theta=math.radians(10.0), **kw)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(geom: TrapGeometry) -> ValidationReport:
    rep = ValidationReport()
    if not geom.a > 0:
        rep.violations.append("sphere radius must be positive")
    if not geom.r > geom.a:
        rep.violations.append("hole must exceed sphere")
    if not geom.h > 0:
        rep.violations.append("disk height must be positive")
    if not 0 < geom.theta < math.pi:
        rep.violations.append("slit angle must lie in (0, pi)")
    if not geom.outer_radius > geom.r:
        rep.violations.append("disk outer radius must exceed hole radius")
    if not geom.d_coil > 2 * geom.outer_radius:
        rep.violations.append("coil bore must exceed disk diameter")
    if geom.d_pl is not None and geom.d_pl < 0:
        rep.violations.append("plate distance must be non-negative")
    if geom.plate_thickness is not None and not geom.plate_thickness > 0:
        rep.violations.append("plate thickness must be positive")
    if rep.violations:
        return rep

    ra = geom.r / geom.a
    ha = geom.h / geom.a
    if not 1.1 <= ra <= 3.0:
        rep.warnings.append(f"r/a = {ra:.3g} outside the trapping band [1.1, 3.0]")
    if not 2.0 <= ha <= 10.0:
        rep.warnings.append(f"h/a = {ha:.3g} outside the trapping band [2, 10]")
    if geom.theta >= math.pi / 2:
        rep.warnings.append("no slit-direction trapping expected for theta >= 90 deg")
    return rep


class EffectiveRadius(NamedTuple):
    radius: float
    trap_lost: bool


def effective_radius(geom: TrapGeometry, sc: SuperconductorMaterial) -> EffectiveRadius:
    """Hole radius enlarged by the London penetration depth."""
    if sc.lambda_L0 < 0:
        raise ValueError("lambda_L0 must be non-negative")
    r_eff = geom.r + sc.lambda_L0
    return EffectiveRadius(r_eff, r_eff / geom.a > TRAP_LOSS_RATIO)


# ---------------------------------------------------------------------------
# structured grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    half_extent: tuple[float, float, float]
    cells: tuple[int, int, int]
    refinement: float | tuple[float, float, float] | None = None
    core_half_extent: tuple[float, float, float] | None = None
    anchors: tuple[float | None, float | None, float | None] | None = None

    def __post_init__(self) -> None:
        if len(self.half_extent) != 3 or len(self.cells) != 3:
            raise ValueError("grid needs three axes")
        if any(n < 32 for n in self.cells):
            raise ValueError("at least 32 cells per axis are required")
        if any(not L > 0 for L in self.half_extent):
            raise ValueError("half extents must be positive")
        if self.refinement is not None:
            if any(not f >= 1 for f in self.axis_refinement()):
                raise ValueError("refinement factor must be >= 1")
            if self.core_half_extent is None:
                raise ValueError("refinement needs a core_half_extent")

    def axis_refinement(self) -> tuple:
        """Refinement per axis (a scalar applies to all three)."""
        if isinstance(self.refinement, (tuple, list)):
            if len(self.refinement) != 3:
                raise ValueError("refinement needs one value or three")
            return tuple(self.refinement)
        return (self.refinement,) * 3

    def scaled(self, factor: float) -> "GridSpec":
        """Same layout with every cell count multiplied by ``factor``."""
        cells = tuple(int(round(n * factor)) for n in self.cells)
        return GridSpec(self.half_extent, cells, self.refinement, self.core_half_extent,
                        self.anchors)

    def with_cells(self, n: int) -> "GridSpec":
        return GridSpec(self.half_extent, (n, n, n), self.refinement, self.core_half_extent,
                        self.anchors)


def _stretched_tail(start: float, stop: float, h0: float, n: int) -> np.ndarray:
    """``n`` geometrically growing cells covering [start, stop], first one ~h0."""
    length = stop - start
    if n <= 0:
        raise ValueError("no cells left outside the refined core")
    if n == 1 or n * h0 >= length:
        return np.linspace(start, stop, n + 1)
    lo, hi = 1.0, 2.0
    while h0 * (hi ** n - 1) / (hi - 1) < length:
        hi *= 2
    for _ in range(200):
        q = 0.5 * (lo + hi)
        if h0 * (q ** n - 1) / (q - 1) < length:
            lo = q
        else:
            hi = q
    q = 0.5 * (lo + hi)
    widths = h0 * q ** np.arange(1, n + 1)
    widths *= length / widths.sum()
    return start + np.concatenate([[0.0], np.cumsum(widths)])


def axis_nodes(L: float, n: int, refinement: float | None = None,
               core: float | None = None, anchor: float | None = None) -> np.ndarray:
    """Node coordinates of a grid symmetric about zero with ``n`` cells.

    With ``refinement`` the band ``|x| <= core`` gets uniform cells
    ``refinement`` times finer than a uniform grid; ``anchor`` (inside the
    core, even ``n`` only) is then placed exactly on a node.
    """
    if refinement is None or core is None or core >= L:
        return np.linspace(-L, L, n + 1)
    h_core = 2 * L / n / refinement
    odd = n % 2 == 1
    x0 = h_core / 2 if odd else 0.0
    if anchor is not None and not odd and 0 < anchor <= core:
        h_core = anchor / max(1, round(anchor / h_core))
    n_half = n // 2
    n_core = max(1, int(math.ceil((core - x0) / h_core - 1e-9)))
    n_core = min(n_core, n_half - 1)
    if anchor is None or odd:
        h_core = (core - x0) / n_core
    inner = x0 + h_core * np.arange(n_core + 1)
    tail = _stretched_tail(inner[-1], L, h_core, n_half - n_core)
    half = np.concatenate([inner, tail[1:]])
    if odd:
        return np.concatenate([-half[::-1], half])
    return np.concatenate([-half[:0:-1], half])


class Grid:
    """Rectilinear cell-centred grid built from a :class:`GridSpec`."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        core = spec.core_half_extent or (None, None, None)
        anchors = spec.anchors or (None, None, None)
        nodes = tuple(
            axis_nodes(L, n, f, c, p)
            for L, n, f, c, p in zip(spec.half_extent, spec.cells, spec.axis_refinement(), core,
                                     anchors)
        )
        self._set_nodes(nodes)
        self.offset = (0.0, 0.0, 0.0)

    def shifted(self, offset: Sequence[float]) -> "Grid":
        """The same grid translated by ``offset`` (m).

        Moving the grid with the sphere keeps the sphere's discretisation
        fixed, so sub-cell displacements carry no grid-alignment ripple.
        """
        out = object.__new__(Grid)
        out.spec = self.spec
        out._set_nodes(tuple(x + float(d) for x, d in zip(self.nodes, offset)))
        out.offset = tuple(float(a + d) for a, d in zip(self.offset, offset))
        return out

    def _set_nodes(self, nodes) -> None:
        self.nodes = nodes
        for x in self.nodes:
            if not (np.all(np.isfinite(x)) and np.all(np.diff(x) > 0)):
                raise ValueError("grid nodes are not strictly increasing")
        self.centers = tuple(0.5 * (x[1:] + x[:-1]) for x in self.nodes)
        self.widths = tuple(np.diff(x) for x in self.nodes)
        self.shape = tuple(len(c) for c in self.centers)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(*self.centers, indexing="ij")

    def min_spacing(self) -> float:
        return float(min(w.min() for w in self.widths))

    def spacing_at(self, point: Sequence[float]) -> np.ndarray:
        """Cell widths of the cell containing ``point``."""
        out = []
        for x, w, p in zip(self.nodes, self.widths, point):
            i = int(np.clip(np.searchsorted(x, p) - 1, 0, len(w) - 1))
            out.append(w[i])
        return np.array(out)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        ok = np.ones(len(pts), dtype=bool)
        for k in range(3):
            ok &= (pts[:, k] >= self.nodes[k][0]) & (pts[:, k] <= self.nodes[k][-1])
        return ok


# ---------------------------------------------------------------------------
# signed distances and smoothed volume fractions
# ---------------------------------------------------------------------------

SDF = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def superconductor_sdf(geom: TrapGeometry, r: float | None = None) -> SDF:
    """Approximate signed distance to the slit disk (negative inside)."""
    hole = geom.r if r is None else r
    R = geom.outer_radius
    half_h = geom.h / 2
    alpha = geom.theta / 2

    def sdf(x, y, z):
        rho = np.hypot(x, y)
        d_ring = np.maximum(hole - rho, rho - R)
        d_slab = np.abs(z) - half_h
        phi = np.abs(np.arctan2(y, x))
        dphi = phi - alpha
        d_wedge = np.where(np.abs(dphi) < math.pi / 2, rho * np.sin(dphi), np.sign(dphi) * rho)
        # outside the slit wedge means d_wedge > 0
        return np.maximum(np.maximum(d_ring, d_slab), -d_wedge)

    return sdf


def sphere_sdf(center: Sequence[float], a: float) -> SDF:
    cx, cy, cz = (float(c) for c in center)

    def sdf(x, y, z):
        return np.sqrt((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2) - a

    return sdf


def volume_fraction(grid: Grid, sdf: SDF, subsamples: int = 4) -> np.ndarray:
    """Smoothed volume fraction of the region ``sdf < 0`` in every cell.

    Cells crossed by the interface are sub-sampled; each sample contributes a
    linear ramp of width equal to the sub-sample spacing, so the fraction
    varies continuously when the body moves by a fraction of a cell.
    """
    X, Y, Z = grid.mesh()
    d = sdf(X, Y, Z)
    dx, dy, dz = np.meshgrid(*grid.widths, indexing="ij")
    half_diag = 0.5 * np.sqrt(dx ** 2 + dy ** 2 + dz ** 2)
    frac = (d < 0).astype(float)
    band = np.abs(d) < half_diag * 1.05
    if not band.any():
        return frac
    idx = np.nonzero(band)
    cx, cy, cz = X[idx], Y[idx], Z[idx]
    wx, wy, wz = dx[idx], dy[idx], dz[idx]
    s = subsamples
    offs = (np.arange(s) + 0.5) / s - 0.5
    ramp = np.cbrt(wx * wy * wz) / s
    acc = np.zeros(len(cx))
    for ox in offs:
        for oy in offs:
            for oz in offs:
                dd = sdf(cx + ox * wx, cy + oy * wy, cz + oz * wz)
                acc += np.clip(0.5 - dd / ramp, 0.0, 1.0)
    frac[idx] = acc / s ** 3
    return frac
