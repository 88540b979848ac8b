"""Position moments and magnetic susceptibilities.

With the field along z and the molecule in the x-z plane the diamagnetic
susceptibility is -<x^2 + y^2>/4 in the zero-field state.  The total
susceptibility is -2 E2, where E2 is the B^2 coefficient of the equilibrium
energy E_min(B) at fixed inclination, and the paramagnetic part is the
difference of the two.

Zero-field samples of a field branch are taken in the limit B -> 0+ (at
``ZERO_FIELD_LIMIT``): the Landau-dressed trial family is strictly larger
than the bare one, so E(B) restricted to B > 0 is smooth while its value at
exactly B = 0 sits a few microhartree above the B -> 0+ limit.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels
from .core import FieldConfig
from .electronic import (DEFAULT_REL_TOL, Equilibrium, Geometry, TrialParameters, _Problem,
                         choose_rule, find_equilibrium, rescale_landau)
from .quadrature import QuadratureError

log = logging.getLogger(__name__)

ZERO_FIELD_LIMIT = 1e-6
PERTURBATIVE_MAX_FIELD = 0.04
CHI_B_SAMPLES = (0.0, 0.01, 0.02, 0.03, 0.04)
# scaled-Vandermonde condition number above which the E(B) fit is rejected
MAX_FIT_CONDITION = 1e8


@dataclass(frozen=True)
class Moments:
    x2: float
    y2: float
    z2: float
    xz: float


def position_moments(params: TrialParameters, geometry: Geometry, field_cfg: FieldConfig,
                     rel_tol: float = DEFAULT_REL_TOL) -> Moments:
    """Expectation values <x^2>, <y^2>, <z^2>, <xz> in bohr^2.

    The rule is chosen by the same energy criterion as ``rayleigh_quotient``
    and checked on the next refinement level.
    """
    params.validate(field_cfg.b)
    rule, _ = choose_rule(params, geometry, field_cfg, rel_tol)
    vals = []
    for r in (rule, rule.refined()):
        prob = _Problem(geometry, field_cfg, r)
        m = _kernels.moments(*prob._args(params.nonlinear_vector()), params.linear, *prob.pts)
        if not m[0] > 0:
            raise ValueError("trial function is not normalizable for these parameters")
        vals.append(m[1:] / m[0])
    diff = np.max(np.abs(vals[1] - vals[0])) / max(np.max(np.abs(vals[1])), 1e-12)
    if diff > 100 * rel_tol:
        raise QuadratureError(f"moments not converged (relative change {diff:.1e})", achieved=diff)
    return Moments(*(float(v) for v in vals[1]))


def diamagnetic_chi(theta: float, x2_0: float, z2_0: float) -> float:
    """Zero-field diamagnetic susceptibility at inclination ``theta``.

    ``x2_0`` and ``z2_0`` are the moments of the parallel (theta = 0)
    molecule; rotating about y gives -[x2_0 (1 + cos^2) + z2_0 sin^2] / 4.
    """
    if not (math.isfinite(x2_0) and math.isfinite(z2_0)) or x2_0 < 0 or z2_0 < 0:
        raise ValueError("moments must be finite and non-negative")
    c2 = math.cos(theta) ** 2
    return -0.25 * (x2_0 * (1.0 + c2) + z2_0 * (1.0 - c2))


@dataclass(frozen=True)
class BranchPoint:
    """One point of a field branch: equilibrium at (b, theta) and X(b)."""

    b: float
    theta: float
    r_eq: float
    energy: float
    x: float
    moments: Moments
    params: TrialParameters
    b_eval: float

    @property
    def x_value(self) -> float:
        return self.x


def _branch_point(eq: Equilibrium, b: float, b_eval: float, theta: float, rel_tol: float) -> BranchPoint:
    m = position_moments(eq.params, Geometry(eq.r_eq, theta), FieldConfig(b_eval, theta), rel_tol)
    return BranchPoint(b, theta, eq.r_eq, eq.e_eq, -0.25 * (m.x2 + m.y2), m, eq.params, b_eval)


def field_branch(theta: float, b_values: Sequence[float], init: TrialParameters | None = None,
                 bracket_width: tuple[float, float] = (0.35, 0.25), restarts: int = 6,
                 seed: int = 0, xatol: float = 1e-4, rel_tol: float = DEFAULT_REL_TOL,
                 progress: Callable[[str], None] | None = None) -> list[BranchPoint]:
    """Equilibria along increasing B at fixed inclination by continuation.

    The zero-field equilibrium seeds the branch; the first sample (B -> 0+
    when ``b_values`` starts at 0) is searched with ``restarts`` random
    restarts and later samples are warm-started from their predecessor with
    the Landau exponents B*beta held fixed, so the whole branch follows one
    local minimum and E(B), X(B) stay smooth.
    """
    bs = [float(b) for b in b_values]
    if not bs or any(b < 0 for b in bs) or any(b2 <= b1 for b1, b2 in zip(bs, bs[1:])):
        raise ValueError("b_values must be non-negative and strictly increasing")
    lo_w, hi_w = bracket_width
    eq0 = find_equilibrium(theta, 0.0, (1.6, 2.4), init=init, restarts=3, seed=seed,
                           xatol=xatol, rel_tol=rel_tol)
    out = []
    prev_params, prev_b, r_guess = eq0.params, None, eq0.r_eq
    for b in bs:
        b_eval = b if b > 0 else ZERO_FIELD_LIMIT
        start = prev_params if prev_b is None else rescale_landau(prev_params, prev_b, b_eval)
        eq = find_equilibrium(theta, b_eval, (r_guess - lo_w, r_guess + hi_w), init=start,
                              restarts=restarts if prev_b is None else 0, seed=seed,
                              xatol=xatol, rel_tol=rel_tol)
        out.append(_branch_point(eq, b, b_eval, theta, rel_tol))
        prev_params, prev_b, r_guess = eq.params, b_eval, eq.r_eq
        if progress:
            progress(f"theta={math.degrees(theta):.1f} B={b:g} R_eq={eq.r_eq:.5f} E={eq.e_eq:.9f}")
    return out


def x_of_b(field_cfg: FieldConfig, init: TrialParameters | None = None, restarts: int = 3,
           seed: int = 0, rel_tol: float = DEFAULT_REL_TOL) -> float:
    """X(B) = -<x^2 + y^2>/4 with the optimized wavefunction at R_eq(B, theta).

    A single point; B = 0 uses the bare zero-field wavefunction.  Use
    ``field_branch`` for smooth sequences in B.
    """
    th = field_cfg.theta
    eq = find_equilibrium(th, field_cfg.b, (1.4, 2.4), init=init, restarts=restarts, seed=seed,
                          rel_tol=rel_tol)
    m = position_moments(eq.params, Geometry(eq.r_eq, th), field_cfg, rel_tol)
    return -0.25 * (m.x2 + m.y2)


@dataclass(frozen=True)
class FitModel:
    """Linear least-squares model with named coefficients.

    ``basis(b, theta)`` returns the regressor row; ``evaluate`` applies it.
    """

    name: str
    terms: tuple[str, ...]
    coefficients: tuple[float, ...]
    rms: float
    n_samples: int
    basis: Callable = field(repr=False, compare=False, default=None)

    def evaluate(self, b: float, theta: float) -> float:
        return float(np.dot(self.basis(b, theta), self.coefficients))

    def as_dict(self) -> dict:
        return {"name": self.name, "terms": list(self.terms),
                "coefficients": dict(zip(self.terms, self.coefficients)),
                "rms": self.rms, "n_samples": self.n_samples}


def _x_basis(b, theta):
    c = math.cos(theta) ** 2
    return np.array([1.0, b, b * b, c, b * c, b * b * c])


def _chi_basis(b, theta):
    return np.array([1.0, math.cos(theta) ** 2, math.cos(2 * theta) ** 2])


def _cos2_basis(b, theta):
    return np.array([1.0, math.cos(theta) ** 2])


def _lstsq(name, terms, basis, b, theta, y) -> FitModel:
    A = np.array([basis(bi, ti) for bi, ti in zip(b, theta)])
    y = np.asarray(y, dtype=float)
    if A.shape[0] < A.shape[1] or np.linalg.matrix_rank(A) < A.shape[1]:
        raise ValueError(f"{name}: sample set is rank deficient for {A.shape[1]} coefficients")
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    rms = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return FitModel(name, terms, tuple(float(c) for c in coef), rms, len(y), basis)


def fit_x_surface(b: Sequence[float], theta: Sequence[float], x: Sequence[float]) -> FitModel:
    """Fit X = c0 + c1 B + c2 B^2 + (d0 + d1 B + d2 B^2) cos^2(theta)."""
    return _lstsq("X(B,theta)", ("c0", "c1", "c2", "d0", "d1", "d2"), _x_basis, b, theta, x)


def fit_chi_d(theta: Sequence[float], chi_d: Sequence[float]) -> FitModel:
    """Fit chi_d = a + b cos^2(theta) directly to zero-field values."""
    return _lstsq("chi_d(theta)", ("a", "b"), _cos2_basis, [0.0] * len(theta), theta, chi_d)


def fit_chi_angular(theta: Sequence[float], chi: Sequence[float]) -> FitModel:
    """Fit chi = a + b cos^2(theta) + c cos^2(2 theta)."""
    return _lstsq("chi(theta)", ("a", "b", "c"), _chi_basis, [0.0] * len(theta), theta, chi)


@dataclass(frozen=True)
class ChiFit:
    chi: float
    e0: float
    e2: float
    e4: float
    rms: float
    condition: float

    def predict(self, b: float) -> float:
        return self.e0 + self.e2 * b**2 + self.e4 * b**4


def fit_even_quartic(b: Sequence[float], energy: Sequence[float]) -> ChiFit:
    """Least-squares E0 + E2 B^2 + E4 B^4; chi = -2 E2."""
    b = np.asarray(b, dtype=float)
    e = np.asarray(energy, dtype=float)
    if b.size < 3 or b.size != e.size:
        raise ValueError("need at least three (B, E) samples")
    scale = max(float(np.max(np.abs(b))), 1e-300)
    s = b / scale
    A = np.vstack([np.ones_like(s), s**2, s**4]).T
    cond = float(np.linalg.cond(A))
    if not math.isfinite(cond) or cond > MAX_FIT_CONDITION:
        raise ValueError(f"E(B) fit is ill-conditioned (condition number {cond:.2e})")
    c, *_ = np.linalg.lstsq(A, e, rcond=None)
    rms = float(np.sqrt(np.mean((A @ c - e) ** 2)))
    e2 = c[1] / scale**2
    return ChiFit(float(-2 * e2), float(c[0]), float(e2), float(c[2] / scale**4), rms, cond)


def total_chi(theta: float, b_samples: Sequence[float] = CHI_B_SAMPLES,
              branch: Sequence[BranchPoint] | None = None, **branch_kw) -> tuple[float, ChiFit]:
    """Total susceptibility from the equilibrium energy curve E_min(B).

    ``b_samples`` must contain B = 0 (evaluated as B -> 0+), lie within
    [0, 0.04] and have at least five points.  A precomputed ``branch`` may
    be passed to avoid recomputation; its points at ``b_samples`` are used.
    """
    bs = sorted(float(b) for b in b_samples)
    if len(bs) < 5 or bs[0] != 0.0 or bs[-1] > PERTURBATIVE_MAX_FIELD + 1e-12:
        raise ValueError("need >= 5 field samples in [0, 0.04] including B = 0")
    if branch is None:
        branch = field_branch(theta, bs, **branch_kw)
    pts = {round(p.b, 12): p for p in branch}
    try:
        energies = [pts[round(b, 12)].energy for b in bs]
    except KeyError as exc:
        raise ValueError(f"branch lacks the field sample B={exc.args[0]}") from None
    fit = fit_even_quartic(bs, energies)
    return fit.chi, fit


@dataclass(frozen=True)
class SusceptibilityRecord:
    theta: float
    x2: float
    y2: float
    z2: float
    chi_d: float
    chi_total: float
    chi_p: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "chi_p", self.chi_total - self.chi_d)

    def row(self) -> dict:
        return {"theta_deg": math.degrees(self.theta), "x2": self.x2, "y2": self.y2, "z2": self.z2,
                "chi_d": self.chi_d, "chi_p": self.chi_p, "chi_total": self.chi_total}


def paramagnetic_chi(record: SusceptibilityRecord) -> float:
    return record.chi_total - record.chi_d


def zero_field_moments(theta_values: Iterable[float], r: float | None = None,
                       params: TrialParameters | None = None, seed: int = 0,
                       rel_tol: float = DEFAULT_REL_TOL) -> tuple[float, TrialParameters, list[Moments]]:
    """Zero-field moments at each inclination for one optimized wavefunction.

    ``r`` defaults to the computed zero-field equilibrium distance.
    """
    if params is None or r is None:
        eq = find_equilibrium(0.0, 0.0, (1.6, 2.4), init=params, seed=seed, rel_tol=rel_tol)
        r = eq.r_eq if r is None else r
        if params is None:
            from .electronic import optimize_energy
            params = optimize_energy(Geometry(r, 0.0), FieldConfig(0.0, 0.0), eq.params,
                                     restarts=3, seed=seed, rel_tol=rel_tol).params
    out = [position_moments(params, Geometry(r, t), FieldConfig(0.0, t), rel_tol) for t in theta_values]
    return r, params, out


def susceptibility_table(theta_values: Sequence[float], branches: dict | None = None,
                         r: float | None = None, seed: int = 0, rel_tol: float = DEFAULT_REL_TOL,
                         progress: Callable[[str], None] | None = None) -> list[SusceptibilityRecord]:
    """Moments, chi_d, chi and chi_p at each inclination.

    chi_d uses the rotation formula with the theta = 0 moments; moments are
    reported at each theta directly.  ``branches`` maps theta to a
    precomputed ``field_branch`` covering ``CHI_B_SAMPLES``.
    """
    thetas = list(theta_values)
    r, params, moms = zero_field_moments([0.0] + thetas, r=r, seed=seed, rel_tol=rel_tol)
    m0 = moms[0]
    records = []
    for t, m in zip(thetas, moms[1:]):
        br = None if branches is None else branches.get(t)
        if br is None:
            br = field_branch(t, CHI_B_SAMPLES, seed=seed, rel_tol=rel_tol, progress=progress)
        chi, _ = total_chi(t, CHI_B_SAMPLES, branch=br)
        records.append(SusceptibilityRecord(t, m.x2, m.y2, m.z2, diamagnetic_chi(t, m0.x2, m0.z2), chi))
    return records


TABLE_COLUMNS = ("theta_deg", "x2", "y2", "z2", "chi_d", "chi_p", "chi_total")


def write_table_csv(records: Iterable[SusceptibilityRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for rec in records:
            row = rec.row()
            w.writerow([f"{row['theta_deg']:.4f}"] + [f"{row[c]:.10f}" for c in TABLE_COLUMNS[1:]])
