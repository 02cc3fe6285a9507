"""Physical constants, material records and constitutive models.

Built-in records cover the soft ferromagnet (YIG) and the two superconductors
(Nb, YBCO) discussed for the levitation trap.  Critical fields follow a
parabolic temperature law ``H(T) = H(0) * (1 - (T/Tc)**p)`` with a
configurable exponent.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple


@dataclass(frozen=True)
class PhysicalConstants:
    mu0: float = 4e-7 * math.pi          # T m / A
    kB: float = 1.380649e-23             # J / K
    R: float = 8.314462618               # J / (K mol)
    NA: float = 6.02214076e23            # 1 / mol
    Phi0: float = 2.067833848e-15        # Wb
    g: float = 9.80665                   # m / s^2

    def __post_init__(self) -> None:
        for name in ("mu0", "kB", "R", "NA", "Phi0", "g"):
            if not getattr(self, name) > 0:
                raise ValueError(f"constant {name} must be positive")


CONSTANTS = PhysicalConstants()
MU0 = CONSTANTS.mu0

# molar mass of air (kg/mol), used for residual-gas damping
AIR_MOLAR_MASS = 28.966e-3


@dataclass(frozen=True)
class FerromagnetMaterial:
    name: str
    rho: float                 # kg / m^3
    mu_r: float                # low-frequency relative permeability
    M_sat: float               # A / m
    magnon_Q_floor: float | None = None

    def __post_init__(self) -> None:
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.mu_r > 1:
            raise ValueError("mu_r must exceed 1 for a soft ferromagnet")
        if not self.M_sat > 0:
            raise ValueError("M_sat must be positive")
        if self.magnon_Q_floor is not None and not self.magnon_Q_floor > 0:
            raise ValueError("magnon_Q_floor must be positive when given")

    @property
    def B_cross(self) -> float:
        """Flux density where the permeability branch reaches M_sat."""
        return MU0 * self.mu_r * self.M_sat / (self.mu_r - 1.0)


@dataclass(frozen=True)
class SuperconductorMaterial:
    name: str
    Tc: float                  # K
    Hc1_0: float               # T
    Hvs_0: float               # T, vortex-solid / vortex-liquid boundary at 0 K
    lambda_L0: float           # m
    xi: float                  # m
    sigma_n: float             # S / m, normal-state conductivity
    hard_pinning: bool = False
    exponent: float = 2.0      # critical-field temperature law exponent

    def __post_init__(self) -> None:
        if not self.Tc > 0:
            raise ValueError("Tc must be positive")
        if not 0 < self.Hc1_0 <= self.Hvs_0:
            raise ValueError("require 0 < Hc1_0 <= Hvs_0")
        if not self.lambda_L0 >= 0:
            raise ValueError("lambda_L0 must be non-negative")
        if not self.xi > 0:
            raise ValueError("xi must be positive")
        if not self.sigma_n >= 0:
            raise ValueError("sigma_n must be non-negative")
        if not self.exponent > 0:
            raise ValueError("exponent must be positive")


YIG = FerromagnetMaterial(name="YIG", rho=5172.0, mu_r=32.0, M_sat=196e3, magnon_Q_floor=None)

# Tc values are standard handbook numbers; Nb vortex-solid boundary set to Hc2(0).
NB = SuperconductorMaterial(
    name="Nb", Tc=9.25, Hc1_0=0.180, Hvs_0=0.450, lambda_L0=39e-9, xi=38e-9,
    sigma_n=1.5e9, hard_pinning=False,
)
YBCO = SuperconductorMaterial(
    name="YBCO", Tc=92.0, Hc1_0=0.110, Hvs_0=150.0, lambda_L0=100e-9, xi=1e-9,
    sigma_n=2e4, hard_pinning=True,
)

FERROMAGNETS = {"YIG": YIG}
SUPERCONDUCTORS = {"Nb": NB, "YBCO": YBCO}


class Regime(enum.Enum):
    MEISSNER = "Meissner"
    VORTEX_SOLID = "VortexSolid"
    VORTEX_LIQUID = "VortexLiquid"
    NORMAL = "Normal"


@dataclass(frozen=True)
class OperatingRegime:
    regime: Regime
    usable: bool
    Hc1: float = field(default=0.0)
    Hvs: float = field(default=0.0)

    @property
    def name(self) -> str:
        return self.regime.value


def magnetization(material: FerromagnetMaterial, B_local: float) -> float:
    """Magnetization (A/m) of the ferromagnet in a local flux density ``B_local`` (T).

    Linear permeability branch below ``material.B_cross``, M_sat above.
    """
    if B_local < 0:
        raise ValueError("B_local must be non-negative")
    if B_local >= material.B_cross:
        return material.M_sat
    return B_local * (material.mu_r - 1.0) / (MU0 * material.mu_r)


def critical_field(material: SuperconductorMaterial, which: str, T: float,
                   exponent: float | None = None) -> float:
    """Critical field ``which`` ("Hc1" or "Hvs") in tesla at temperature ``T``."""
    if which == "Hc1":
        H0 = material.Hc1_0
    elif which == "Hvs":
        H0 = material.Hvs_0
    else:
        raise ValueError(f"unknown critical field {which!r}")
    if T < 0:
        raise ValueError("temperature must be non-negative")
    if T > material.Tc:
        raise ValueError(f"T={T} K exceeds Tc={material.Tc} K")
    p = material.exponent if exponent is None else exponent
    if T == material.Tc:
        return 0.0
    return H0 * (1.0 - (T / material.Tc) ** p)


def critical_temperature_for_field(material: SuperconductorMaterial, which: str, B: float,
                                   exponent: float | None = None) -> float:
    """Temperature at which the critical field ``which`` drops to ``B``."""
    H0 = material.Hc1_0 if which == "Hc1" else material.Hvs_0
    p = material.exponent if exponent is None else exponent
    if B >= H0:
        return 0.0
    return material.Tc * (1.0 - B / H0) ** (1.0 / p)


def classify_regime(material: SuperconductorMaterial, B: float, T: float) -> OperatingRegime:
    if T >= material.Tc:
        return OperatingRegime(Regime.NORMAL, usable=False)
    hc1 = critical_field(material, "Hc1", T)
    hvs = critical_field(material, "Hvs", T)
    if B < hc1:
        regime = Regime.MEISSNER
    elif B < hvs:
        regime = Regime.VORTEX_SOLID
    else:
        regime = Regime.VORTEX_LIQUID
    usable = regime is Regime.MEISSNER or (regime is Regime.VORTEX_SOLID and material.hard_pinning)
    return OperatingRegime(regime, usable=usable, Hc1=hc1, Hvs=hvs)


class VortexLattice(NamedTuple):
    spacing: float          # triangular lattice constant (m)
    normal_fraction: float  # volume fraction of normal cores
    valid: bool             # False when the core fraction reaches 1


def vortex_lattice(material: SuperconductorMaterial, B: float) -> VortexLattice:
    if not B > 0:
        raise ValueError("vortex lattice needs B > 0")
    spacing = 1.075 * math.sqrt(CONSTANTS.Phi0 / B)
    rho_n = 2.0 * math.pi * material.xi ** 2 / (math.sqrt(3.0) * spacing ** 2)
    return VortexLattice(spacing, rho_n, rho_n < 1.0)


def ferromagnet_from_dict(data: dict) -> FerromagnetMaterial:
    base = FERROMAGNETS.get(data.get("name", ""), None)
    if base is None:
        return FerromagnetMaterial(**data)
    return replace(base, **data)


def superconductor_from_dict(data: dict) -> SuperconductorMaterial:
    base = SUPERCONDUCTORS.get(data.get("name", ""), None)
    if base is None:
        return SuperconductorMaterial(**data)
    return replace(base, **data)
