"""Physical constants, unit conventions and shared value types.

Everything downstream works in atomic units: lengths in bohr, energies in
hartree, magnetic fields in units of B0 = 2.35e5 T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

B0_TESLA = 2.35e5
BOHR = 1.0
HARTREE = 1.0
ELECTRON_MASS = 1.0

# CODATA 2018 nuclear masses in electron masses.
PROTON_MASS = 1836.15267343
DEUTERON_MASS = 3670.48296788


@dataclass(frozen=True)
class Constants:
    B0_tesla: float = B0_TESLA
    bohr: float = BOHR
    hartree: float = HARTREE
    electron_mass: float = ELECTRON_MASS


CONSTANTS = Constants()


def field_to_si(b: float) -> float:
    """Convert a field strength in units of B0 to tesla."""
    if not math.isfinite(b) or b < 0:
        raise ValueError(f"field strength must be a finite non-negative number, got {b!r}")
    return b * B0_TESLA


def field_from_si(tesla: float) -> float:
    if not math.isfinite(tesla) or tesla < 0:
        raise ValueError(f"field must be a finite non-negative number, got {tesla!r}")
    return tesla / B0_TESLA


@dataclass(frozen=True)
class FieldConfig:
    """Field strength ``b`` (units of B0) and inclination ``theta`` (radians)."""

    b: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.b) or self.b < 0:
            raise ValueError(f"field strength must be >= 0, got {self.b!r}")
        if not math.isfinite(self.theta):
            raise ValueError("theta must be finite")

    def canonical(self) -> "FieldConfig":
        """Map theta into [0, pi/2] using the symmetries of the problem."""
        return FieldConfig(self.b, canonical_theta(self.theta))


def canonical_theta(theta: float) -> float:
    # theta -> -theta and theta -> pi - theta are both symmetries
    t = math.fmod(abs(theta), math.pi)
    if t > math.pi / 2:
        t = math.pi - t
    return t


_SPECIES = {
    "H2+": ("fermionic", PROTON_MASS),
    "D2+": ("bosonic", DEUTERON_MASS),
}


@dataclass(frozen=True)
class NuclearSpecies:
    """A homonuclear one-electron ion.

    ``nuclear_mass`` is the mass of a single nucleus in electron masses and
    may be overridden to reproduce other mass conventions.
    """

    name: str
    nuclear_mass: float
    statistics: str

    @classmethod
    def from_name(cls, name: str, nuclear_mass: float | None = None) -> "NuclearSpecies":
        key = name.strip().upper().replace("_", "").replace("PLUS", "+")
        if key not in _SPECIES:
            raise ValueError(f"unknown species {name!r}; expected one of {sorted(_SPECIES)}")
        stats, mass = _SPECIES[key]
        if nuclear_mass is not None:
            if not nuclear_mass > 0:
                raise ValueError("nuclear mass must be positive")
            mass = float(nuclear_mass)
        return cls(key, mass, stats)

    @property
    def total_mass(self) -> float:
        return 2.0 * self.nuclear_mass

    @property
    def fermionic(self) -> bool:
        return self.statistics == "fermionic"


def species_masses(species: str | NuclearSpecies) -> tuple[float, float]:
    """Return ``(nuclear_mass, M_s)`` with ``M_s`` the total nuclear mass."""
    if not isinstance(species, NuclearSpecies):
        species = NuclearSpecies.from_name(species)
    return species.nuclear_mass, species.total_mass


@dataclass(frozen=True)
class GridSpec:
    r_min: float
    r_max: float
    n_r: int
    theta_values: tuple[float, ...] = field(default=(0.0,))
    spacing: str = "uniform"

    def __post_init__(self):
        if not (self.r_min > 0 and self.r_max > self.r_min):
            raise ValueError("need 0 < r_min < r_max")
        if self.n_r < 2:
            raise ValueError("n_r must be at least 2")
        th = tuple(float(t) for t in self.theta_values)
        object.__setattr__(self, "theta_values", th)
        if any(t < 0 or t > math.pi / 2 + 1e-12 for t in th):
            raise ValueError("theta values must lie in [0, pi/2]")
        if any(b <= a for a, b in zip(th, th[1:])):
            raise ValueError("theta values must be strictly increasing")
        if self.spacing not in ("uniform", "well"):
            raise ValueError(f"unknown spacing {self.spacing!r}")

    def r_values(self) -> list[float]:
        if self.spacing == "uniform":
            step = (self.r_max - self.r_min) / (self.n_r - 1)
            return [self.r_min + i * step for i in range(self.n_r)]
        return well_clustered_grid(self.r_min, self.r_max, self.n_r)


def well_clustered_grid(r_min: float, r_max: float, n: int, center: float = 2.0) -> list[float]:
    """Points dense around ``center`` and geometrically sparser outwards."""
    # map a uniform variable through sinh so spacing grows away from the well
    scale = 1.2
    lo = math.asinh((r_min - center) / scale)
    hi = math.asinh((r_max - center) / scale)
    pts = [center + scale * math.sinh(lo + (hi - lo) * i / (n - 1)) for i in range(n)]
    pts[0], pts[-1] = r_min, r_max
    return pts


def parse_range(text: str) -> list[float]:
    """Parse ``start:stop:step`` (inclusive of stop) or a comma list."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3:
            raise ValueError(f"range must be start:stop:step, got {text!r}")
        start, stop, step = parts
        if step <= 0 or stop < start:
            raise ValueError(f"bad range {text!r}")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(n)]
    return [float(p) for p in text.split(",") if p.strip()]


def degrees(values: Sequence[float]) -> list[float]:
    return [math.degrees(v) for v in values]
