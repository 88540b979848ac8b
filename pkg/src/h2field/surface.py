"""Potential energy surfaces V(R, theta) at fixed field and their rotor form.

A surface is a rectangular table of optimized electronic energies.  The
hindered-rotor representation keeps V(R, 0) and the barrier
V90(R) = V(R, 90 deg) - V(R, 0), optionally with a second harmonic, as
natural cubic splines in R.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from . import __version__
from .core import GridSpec
from .electronic import DEFAULT_REL_TOL, TrialParameters, scan_curve

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
UNITS = {"energy": "hartree", "length": "bohr", "field": "B0", "angle": "radian"}
WELL_REGION = (1.2, 4.0)
MAX_ROTOR_STEP = math.radians(15.0) + 1e-9


class SurfaceError(ValueError):
    pass


def default_grid(n_r: int = 60, r_min: float = 0.4, r_max: float = 12.0,
                 theta_step_deg: float = 15.0) -> GridSpec:
    n_t = int(round(90.0 / theta_step_deg)) + 1
    thetas = tuple(math.radians(theta_step_deg * i) for i in range(n_t))
    return GridSpec(r_min, r_max, n_r, thetas, spacing="well")


@dataclass(frozen=True)
class PotentialSurface:
    """Energies ``energies[i, j]`` at ``r_grid[i]`` and ``theta_grid[j]``.

    ``failed[i, j]`` marks nodes whose optimization did not converge.
    """

    b: float
    r_grid: np.ndarray
    theta_grid: np.ndarray
    energies: np.ndarray
    failed: np.ndarray = None
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        # copies: freezing must not touch caller arrays
        r = np.array(self.r_grid, dtype=float)
        t = np.array(self.theta_grid, dtype=float)
        e = np.array(self.energies, dtype=float)
        if r.ndim != 1 or t.ndim != 1 or e.shape != (r.size, t.size):
            raise SurfaceError(f"energy table shape {e.shape} does not match grids ({r.size}, {t.size})")
        if np.any(np.diff(r) <= 0) or np.any(np.diff(t) <= 0):
            raise SurfaceError("surface grids must be strictly increasing")
        if r[0] <= 0:
            raise SurfaceError("internuclear distances must be positive")
        f = np.zeros(e.shape, dtype=bool) if self.failed is None else np.array(self.failed, dtype=bool)
        if f.shape != e.shape:
            raise SurfaceError("failure mask shape mismatch")
        if np.any(~np.isfinite(e[~f])):
            raise SurfaceError("non-finite energy at a node not marked as failed")
        for name, arr in (("r_grid", r), ("theta_grid", t), ("energies", e), ("failed", f)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def usable(self) -> bool:
        lo, hi = WELL_REGION
        rows = (self.r_grid >= lo) & (self.r_grid <= hi)
        return not bool(np.any(self.failed[rows]))

    def require_usable(self) -> None:
        if not self.usable:
            bad = [(float(self.r_grid[i]), math.degrees(self.theta_grid[j]))
                   for i, j in zip(*np.nonzero(self.failed))]
            raise SurfaceError(f"surface has failed nodes in the well region: {bad}")

    def column(self, theta: float) -> np.ndarray:
        j = self._theta_index(theta)
        return self.energies[:, j]

    def _theta_index(self, theta: float) -> int:
        j = int(np.argmin(np.abs(self.theta_grid - theta)))
        if abs(self.theta_grid[j] - theta) > 1e-9:
            raise SurfaceError(f"theta={math.degrees(theta):g} deg is not a grid column")
        return j


def build_surface(grid: GridSpec, field_strength: float, init: TrialParameters | None = None,
                  restarts: int = 3, seed: int = 0, rel_tol: float = DEFAULT_REL_TOL,
                  budget: int = 4000, threads: int = 1,
                  progress: Callable[[str], None] | None = None) -> PotentialSurface:
    """Optimize the energy at every grid node.

    Columns of fixed theta are independent and may run on ``threads``
    workers; within a column points are visited in ascending R and each is
    warm-started from its predecessor.
    """
    rs = grid.r_values()
    thetas = list(grid.theta_values)

    def column(theta):
        pts = scan_curve(theta, field_strength, rs, init=init, restarts=restarts, seed=seed,
                         rel_tol=rel_tol, budget=budget)
        if progress:
            progress(f"B={field_strength:g} theta={math.degrees(theta):.1f} deg: {len(pts)} points")
        return pts

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cols = list(pool.map(column, thetas))
    else:
        cols = [column(t) for t in thetas]
    energies = np.array([[p.energy for p in c] for c in cols]).T
    failed = np.array([[not (p.converged and math.isfinite(p.energy)) for p in c] for c in cols]).T
    energies = np.where(failed & ~np.isfinite(energies), np.nan, energies)
    prov = {"generator": "h2field.surface.build_surface", "code_version": __version__,
            "quadrature_rel_tol": rel_tol, "optimizer_budget": budget, "restarts": restarts,
            "seed": seed, "grid_spacing": grid.spacing}
    return PotentialSurface(field_strength, np.array(rs), np.array(thetas), energies, failed, prov)


@dataclass(frozen=True)
class RotorFit:
    v90: float
    v90_2: float
    rms: float


def fit_rotor_slice(theta: Sequence[float], energies: Sequence[float], n_terms: int = 1) -> RotorFit:
    """Hindered-rotor fit of one fixed-R slice.

    The one-term form uses V90 = E(90) - E(0) exactly.  The two-term form
    keeps that barrier and fits the second-harmonic weight of
    (1 - cos 4 theta)/2 by least squares.
    """
    th = np.asarray(theta, dtype=float)
    e = np.asarray(energies, dtype=float)
    _check_rotor_grid(th)
    if n_terms not in (1, 2):
        raise ValueError("n_terms must be 1 or 2")
    d = e - e[0]
    v90 = float(d[-1])
    resid = d - v90 * np.sin(th) ** 2
    v2 = 0.0
    if n_terms == 2:
        g = 0.5 * (1.0 - np.cos(4.0 * th))
        v2 = float(np.dot(g, resid) / np.dot(g, g))
        resid = resid - v2 * g
    return RotorFit(v90, v2, float(np.sqrt(np.mean(resid**2))))


def _check_rotor_grid(th):
    if th.size < 3 or abs(th[0]) > 1e-9 or abs(th[-1] - math.pi / 2) > 1e-9:
        raise ValueError("rotor fit needs a theta grid from 0 to 90 degrees")
    if np.max(np.diff(th)) > MAX_ROTOR_STEP:
        raise ValueError("theta resolution coarser than 15 degrees is insufficient for a rotor fit")


@dataclass(frozen=True)
class HinderedRotorPotential:
    """V(R, theta) ~ V0(R) + V90(R) sin^2 theta [+ V90_2(R)(1 - cos 4 theta)/2]."""

    b: float
    r_grid: np.ndarray
    v0_values: np.ndarray
    v90_values: np.ndarray
    v90_2_values: np.ndarray | None = None
    slice_rms: np.ndarray | None = None
    global_rms: float = 0.0
    n_terms: int = 1

    def __post_init__(self):
        r = np.asarray(self.r_grid, dtype=float)
        if r.size < 4 or np.any(np.diff(r) <= 0):
            raise SurfaceError("rotor potential needs at least 4 increasing R nodes")
        object.__setattr__(self, "_v0", CubicSpline(r, self.v0_values, bc_type="natural"))
        object.__setattr__(self, "_v90", CubicSpline(r, self.v90_values, bc_type="natural"))
        v2 = self.v90_2_values
        object.__setattr__(self, "_v2", None if v2 is None else CubicSpline(r, v2, bc_type="natural"))

    @property
    def r_range(self) -> tuple[float, float]:
        return float(self.r_grid[0]), float(self.r_grid[-1])

    def _check(self, r):
        r = np.asarray(r, dtype=float)
        lo, hi = self.r_range
        if np.any(r < lo - 1e-12) or np.any(r > hi + 1e-12):
            raise ValueError(f"R outside tabulated range [{lo}, {hi}]; extrapolation is not supported")
        return r

    def v0(self, r):
        return self._v0(self._check(r))

    def v90(self, r):
        return self._v90(self._check(r))

    def energy(self, r, theta):
        r = self._check(r)
        out = self._v0(r) + self._v90(r) * np.sin(theta) ** 2
        if self._v2 is not None:
            out = out + self._v2(r) * 0.5 * (1.0 - np.cos(4.0 * np.asarray(theta)))
        return out


def decompose_hindered_rotor(surface: PotentialSurface, n_terms: int = 1) -> HinderedRotorPotential:
    """Per-R rotor fits; rms is reported per slice and over the whole surface."""
    th = surface.theta_grid
    _check_rotor_grid(th)
    fits = [fit_rotor_slice(th, row, n_terms) for row in surface.energies]
    v0 = surface.energies[:, 0].copy()
    v90 = np.array([f.v90 for f in fits])
    rms = np.array([f.rms for f in fits])
    glob = float(np.sqrt(np.mean(rms**2)))
    v2 = np.array([f.v90_2 for f in fits]) if n_terms == 2 else None
    return HinderedRotorPotential(surface.b, surface.r_grid.copy(), v0, v90, v2, rms, glob, n_terms)


def rotor_from_curves(b: float, r_grid, v0, v90) -> HinderedRotorPotential:
    """Rotor potential from explicit V(R, 0) and V90(R) tables."""
    return HinderedRotorPotential(b, np.asarray(r_grid, float), np.asarray(v0, float),
                                  np.asarray(v90, float))


def interpolate(obj, r, theta):
    """Energy at (r, theta) from a surface (bicubic) or a rotor potential.

    Queries outside the tabulated hull are rejected.
    """
    if isinstance(obj, HinderedRotorPotential):
        return obj.energy(r, theta)
    if not isinstance(obj, PotentialSurface):
        raise TypeError("expected a PotentialSurface or HinderedRotorPotential")
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    rg, tg = obj.r_grid, obj.theta_grid
    if np.any(r < rg[0] - 1e-12) or np.any(r > rg[-1] + 1e-12) or \
            np.any(theta < tg[0] - 1e-12) or np.any(theta > tg[-1] + 1e-12):
        raise ValueError("query outside the surface grid; extrapolation is not supported")
    if np.any(obj.failed):
        raise SurfaceError("cannot interpolate a surface with failed nodes")
    spl = RectBivariateSpline(rg, tg, obj.energies, kx=3, ky=min(3, tg.size - 1), s=0)
    out = spl(r, theta, grid=False)
    return float(out) if out.ndim == 0 else out


# -- persistence ---------------------------------------------------------

def _payload(surface: PotentialSurface) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "units": UNITS,
        "b": surface.b,
        "r_grid": [float(x) for x in surface.r_grid],
        "theta_grid": [float(x) for x in surface.theta_grid],
        "energies": [[None if not math.isfinite(v) else float(v) for v in row]
                     for row in surface.energies],
        "failed": [[bool(v) for v in row] for row in surface.failed],
        "provenance": surface.provenance,
    }


def _digest(payload: dict) -> str:
    # json emits shortest round-trip repr for floats (17 significant digits max)
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def surface_checksum(surface: PotentialSurface) -> str:
    return _digest(_payload(surface))


def save_surface(surface: PotentialSurface, path) -> str:
    """Write the surface as JSON and return its checksum."""
    doc = _payload(surface)
    doc["checksum"] = _digest(doc)
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return doc["checksum"]


def load_surface(path) -> PotentialSurface:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SurfaceError(f"malformed surface file {path}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
        raise SurfaceError(f"unsupported surface schema version {doc.get('schema_version')!r}"
                           if isinstance(doc, dict) else "malformed surface file")
    try:
        stored = doc.pop("checksum")
        e = np.array([[math.nan if v is None else v for v in row] for row in doc["energies"]], float)
        surf = PotentialSurface(float(doc["b"]), np.array(doc["r_grid"], float),
                                np.array(doc["theta_grid"], float), e,
                                np.array(doc["failed"], bool), doc.get("provenance", {}))
    except (KeyError, TypeError) as exc:
        raise SurfaceError(f"malformed surface file {path}: missing or invalid {exc}") from None
    if doc.get("units") != UNITS:
        raise SurfaceError(f"unexpected units {doc.get('units')!r}")
    if _digest(doc) != stored:
        raise SurfaceError("surface checksum mismatch; file was modified or truncated")
    return surf


def write_slices_csv(surface: PotentialSurface, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["R", "theta_deg", "E"])
        for j, t in enumerate(surface.theta_grid):
            for i, r in enumerate(surface.r_grid):
                w.writerow([f"{r:.10f}", f"{math.degrees(t):.6f}", f"{surface.energies[i, j]:.12f}"])
