"""Variational electronic energy of a one-electron two-center ion in a field.

The trial function is a sum of Heitler-London, Hund-Mulliken and
Guillemin-Zener type exponentials, each dressed with a lowest-Landau-orbital
Gaussian written in a one-parameter family of Coulomb gauges.  Energies are
Rayleigh quotients evaluated by spheroidal quadrature; the three linear
coefficients are obtained from the 3x3 generalized eigenproblem and the
remaining nonlinear parameters (exponents, Landau factors and the gauge
parameter) are optimized with analytic gradients.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from . import _kernels
from .core import FieldConfig
from .quadrature import LEVELS, QuadratureError, SpheroidalRule, u_cutoff

log = logging.getLogger(__name__)

NONLINEAR = ("alpha1", "alpha2", "alpha3", "alpha4",
             "beta1x", "beta2x", "beta3x", "beta1y", "beta2y", "beta3y", "xi")

ALPHA_BOUNDS = (0.05, 8.0)
BETA_BOUNDS = (0.0, 10.0)
XI_BOUNDS = (0.0, 1.0)
# Landau exponents B*beta are bounded by this; see beta_upper
LANDAU_EXPONENT_MAX = 2.0
LANDAU_REFERENCE_FIELD = 0.2

DEFAULT_REL_TOL = 1e-6
# energy gain (hartree) below which a restarted local search counts as stalled
STALL_GAIN = 1e-10


class OptimizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrialParameters:
    """Variational parameters of the three-term trial function.

    ``a1`` is conventionally 1; ``a2`` and ``a3`` weight the Hund-Mulliken and
    Guillemin-Zener terms.  ``xi`` selects the gauge (0 Landau, 1/2 symmetric).
    """

    alpha1: float = 1.0
    alpha2: float = 1.3
    alpha3: float = 1.0
    alpha4: float = 0.6
    beta1x: float = 0.5
    beta1y: float = 0.5
    beta2x: float = 0.5
    beta2y: float = 0.5
    beta3x: float = 0.5
    beta3y: float = 0.5
    a1: float = 1.0
    a2: float = 0.3
    a3: float = 0.3
    xi: float = 0.5

    def __post_init__(self):
        values = asdict(self).values()
        if not all(math.isfinite(v) for v in values):
            raise ValueError("trial parameters must be finite")

    @property
    def alpha(self) -> np.ndarray:
        return np.array([self.alpha1, self.alpha2, self.alpha3, self.alpha4])

    @property
    def beta_x(self) -> np.ndarray:
        return np.array([self.beta1x, self.beta2x, self.beta3x])

    @property
    def beta_y(self) -> np.ndarray:
        return np.array([self.beta1y, self.beta2y, self.beta3y])

    @property
    def linear(self) -> np.ndarray:
        return np.array([self.a1, self.a2, self.a3])

    def nonlinear_vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in NONLINEAR])

    def with_nonlinear(self, vec: Sequence[float]) -> "TrialParameters":
        return replace(self, **{n: float(v) for n, v in zip(NONLINEAR, vec)})

    def with_linear(self, coef: Sequence[float]) -> "TrialParameters":
        coef = np.asarray(coef, dtype=float)
        big = np.max(np.abs(coef))
        # keep a1 = 1 unless the Heitler-London weight has vanished
        ref = coef[0] if abs(coef[0]) > 1e-8 * big else big
        coef = coef / ref
        return replace(self, a1=float(coef[0]), a2=float(coef[1]), a3=float(coef[2]))

    def validate(self, b: float = 0.0) -> None:
        if np.any(self.alpha <= 0):
            raise ValueError("all alpha exponents must be positive")
        if not XI_BOUNDS[0] <= self.xi <= XI_BOUNDS[1]:
            raise ValueError(f"gauge parameter xi must lie in [0, 1], got {self.xi}")
        if b > 0 and (np.any(self.beta_x < 0) or np.any(self.beta_y < 0)):
            raise ValueError("negative Landau factors make the trial function non-normalizable")

    def symmetrized(self) -> "TrialParameters":
        """Tie beta_x to beta_y as required for the parallel configuration."""
        bx, by = self.beta_x, self.beta_y
        m = 0.5 * (bx + by)
        return replace(self, beta1x=m[0], beta1y=m[0], beta2x=m[1], beta2y=m[1],
                       beta3x=m[2], beta3y=m[2])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrialParameters":
        return cls(**{k: float(v) for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class Geometry:
    """Internuclear distance ``r`` (bohr) and inclination ``theta`` (radians)."""

    r: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r > 0):
            raise ValueError(f"internuclear distance must be positive, got {self.r!r}")

    @property
    def nuclei(self) -> np.ndarray:
        h = 0.5 * self.r
        n = np.array([math.sin(self.theta), 0.0, math.cos(self.theta)])
        return np.array([h * n, -h * n])


@dataclass(frozen=True)
class EnergyPoint:
    geometry: Geometry
    field: FieldConfig
    energy: float
    params: TrialParameters
    quadrature_error: float
    converged: bool = True
    n_evals: int = 0
    message: str = ""


def trial_value(params: TrialParameters, geometry: Geometry, field: FieldConfig,
                position) -> np.ndarray | float:
    """Amplitude of the trial function at ``position`` (shape (..., 3), bohr)."""
    pos = np.asarray(position, dtype=float)
    if not np.all(np.isfinite(pos)):
        raise ValueError("position must be finite")
    n1, n2 = geometry.nuclei
    r1 = np.linalg.norm(pos - n1, axis=-1)
    r2 = np.linalg.norm(pos - n2, axis=-1)
    x2 = pos[..., 0] ** 2
    y2 = pos[..., 1] ** 2
    a, bx, by, xi, B = params.alpha, params.beta_x, params.beta_y, params.xi, field.b

    def landau(i):
        return np.exp(-B * (bx[i] * xi * x2 + by[i] * (1.0 - xi) * y2))

    psi1 = np.exp(-a[0] * (r1 + r2)) * landau(0)
    psi2 = (np.exp(-a[1] * r1) + np.exp(-a[1] * r2)) * landau(1)
    psi3 = (np.exp(-a[2] * r1 - a[3] * r2) + np.exp(-a[2] * r2 - a[3] * r1)) * landau(2)
    out = params.a1 * psi1 + params.a2 * psi2 + params.a3 * psi3
    return float(out) if np.ndim(out) == 0 else out


def rescale_landau(params: TrialParameters, b_from: float, b_to: float) -> TrialParameters:
    """Carry parameters to another field keeping the Gaussian exponents B*beta fixed."""
    if b_from <= 0 or b_to <= 0:
        return params
    vec = params.nonlinear_vector()
    vec[4:10] *= b_from / b_to
    return params.with_nonlinear(_clip(vec, b_to))


def _decay_rate(params: TrialParameters) -> float:
    a = params.alpha
    return float(min(2.0 * a[0], a[1], a[2] + a[3]))


class _Problem:
    """Energy and gradient at fixed geometry, field and quadrature rule."""

    def __init__(self, geometry: Geometry, field: FieldConfig, rule: SpheroidalRule):
        self.geometry = geometry
        self.field = field
        self.rule = rule
        self.R = geometry.r
        self.st = math.sin(geometry.theta)
        self.ct = math.cos(geometry.theta)
        self.pts = rule.points(self.R)
        self.n_evals = 0

    def _args(self, vec):
        vec = np.asarray(vec, dtype=float)
        return (self.R, self.st, self.ct, self.field.b, vec[10], vec[0:4].copy(),
                vec[4:7].copy(), vec[7:10].copy())

    def matrices(self, vec):
        self.n_evals += 1
        S, T, V = _kernels.matrices(*self._args(vec), *self.pts)
        return S, T + V

    def lowest(self, vec):
        """Lowest generalized eigenpair of the 3x3 problem (electronic energy)."""
        S, H = self.matrices(vec)
        if not (np.all(np.isfinite(S)) and np.all(np.isfinite(H))):
            raise ValueError("non-finite overlap or Hamiltonian matrix")
        s, U = np.linalg.eigh(S)
        if s[-1] <= 1e-300:
            raise ValueError("trial function norm underflowed")
        # canonical orthogonalization drops near-dependent combinations
        keep = s > 1e-11 * s[-1]
        X = U[:, keep] / np.sqrt(s[keep])
        e, y = np.linalg.eigh(X.T @ H @ X)
        c = X @ y[:, 0]
        return float(e[0]), c

    def quotient(self, vec, coef):
        S, H = self.matrices(vec)
        nrm = float(coef @ S @ coef)
        if not math.isfinite(nrm) or nrm <= 1e-300:
            raise ValueError("trial function is not normalizable for these parameters")
        return float(coef @ H @ coef) / nrm, nrm

    def energy_and_gradient(self, vec):
        e, c = self.lowest(vec)
        g = _kernels.gradient(*self._args(vec), c, e, *self.pts)
        self.n_evals += 1
        return e + 1.0 / self.R, g, c


def choose_rule(params: TrialParameters, geometry: Geometry, field: FieldConfig,
                rel_tol: float = DEFAULT_REL_TOL, full_azimuth: bool = False,
                safety: float = 0.5) -> tuple[SpheroidalRule, float]:
    """Coarsest rule whose next refinement changes the energy by < rel_tol.

    Returns the rule and the estimated relative error.
    """
    u_max = u_cutoff(geometry.r, safety * _decay_rate(params))
    vec = params.nonlinear_vector()
    prev = None
    err = math.inf
    for level in range(len(LEVELS)):
        rule = SpheroidalRule(level, u_max, full_azimuth)
        e, _ = _Problem(geometry, field, rule).lowest(vec)
        e += 1.0 / geometry.r
        if prev is not None:
            err = abs(e - prev[1]) / max(abs(e), 1e-12)
            if err <= rel_tol:
                return prev[0], err
        prev = (rule, e)
    raise QuadratureError(f"quadrature did not reach relative accuracy {rel_tol:g}", achieved=err)


def rayleigh_quotient(params: TrialParameters, geometry: Geometry, field: FieldConfig,
                      rel_tol: float = DEFAULT_REL_TOL) -> tuple[float, float]:
    """Energy <psi|H|psi>/<psi|psi> + 1/R for the given parameters and its norm.

    The linear coefficients ``a1..a3`` are used as given.
    """
    params.validate(field.b)
    u_max = u_cutoff(geometry.r, 0.5 * _decay_rate(params))
    prev = None
    err = math.inf
    for level in range(len(LEVELS)):
        prob = _Problem(geometry, field, SpheroidalRule(level, u_max))
        e, nrm = prob.quotient(params.nonlinear_vector(), params.linear)
        e += 1.0 / geometry.r
        if prev is not None:
            err = abs(e - prev) / max(abs(e), 1e-12)
            if err <= rel_tol:
                return e, nrm
        prev = e
    raise QuadratureError(f"quadrature did not reach relative accuracy {rel_tol:g}", achieved=err)


def gauge_linear_term(params: TrialParameters, geometry: Geometry, field: FieldConfig,
                      level: int = 2) -> float:
    """Magnitude of the linear field term B<psi|(xi-1) y d_x + xi x d_y|psi>/<psi|psi>.

    Vanishes for any real trial function; computed on a full-azimuth grid.
    """
    u_max = u_cutoff(geometry.r, 0.5 * _decay_rate(params))
    prob = _Problem(geometry, field, SpheroidalRule(level, u_max, full_azimuth=True))
    norm, lin = _kernels.gauge_term(*prob._args(params.nonlinear_vector()), params.linear, *prob.pts)
    return abs(field.b * lin / norm)


def _beta_scale(b: float) -> float:
    """Optimizer units for the Landau factors: x = beta * scale ~ B * beta."""
    return min(1.0, b / LANDAU_REFERENCE_FIELD)


def beta_upper(b: float) -> float:
    """Upper bound on the Landau factors.

    The Gaussian exponent B*beta is capped at LANDAU_EXPONENT_MAX rather than
    beta itself, so the dressed trial family varies continuously as B -> 0+.
    """
    if b <= 0:
        return BETA_BOUNDS[1]
    return max(BETA_BOUNDS[1], LANDAU_EXPONENT_MAX / b)


def _free_map(geometry: Geometry, field: FieldConfig):
    """Matrix P with full = base + P @ free, and bounds for the free variables."""
    cols = [[i] for i in range(4)]
    if field.b > 0:
        if _is_parallel(geometry.theta):
            cols += [[4, 7], [5, 8], [6, 9]]
        else:
            cols += [[i] for i in range(4, 10)]
        cols.append([10])
    scale = _beta_scale(field.b)
    P = np.zeros((len(NONLINEAR), len(cols)))
    bounds = []
    for j, idx in enumerate(cols):
        i = idx[0]
        if i < 4:
            P[idx, j] = 1.0
            bounds.append(ALPHA_BOUNDS)
        elif i == 10:
            P[idx, j] = 1.0
            bounds.append(XI_BOUNDS)
        else:
            P[idx, j] = 1.0 / scale
            bounds.append((0.0, beta_upper(field.b) * scale))
    return P, bounds


def _is_parallel(theta: float) -> bool:
    return abs(math.sin(theta)) < 1e-12


def _perturb(params: TrialParameters, b: float, rng: np.random.Generator) -> TrialParameters:
    vec = params.nonlinear_vector()
    vec[:4] *= np.exp(rng.normal(0.0, 0.25, 4))
    scale = _beta_scale(b) if b > 0 else 1.0
    vec[4:10] = np.abs(vec[4:10] + rng.normal(0.0, 0.15, 6) / scale)
    vec[10] = vec[10] + rng.normal(0.0, 0.1)
    return params.with_nonlinear(_clip(vec, b))


def _clip(vec, b):
    vec = np.array(vec, dtype=float)
    vec[:4] = np.clip(vec[:4], *ALPHA_BOUNDS)
    vec[4:10] = np.clip(vec[4:10], 0.0, beta_upper(b))
    vec[10] = np.clip(vec[10], *XI_BOUNDS)
    return vec


def _local_minimize(prob: _Problem, start: TrialParameters, budget: int, gtol: float):
    P, bounds = _free_map(prob.geometry, prob.field)
    base = start.nonlinear_vector()
    x0 = np.linalg.lstsq(P, base, rcond=None)[0]
    x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])
    base = np.where(P.sum(axis=1) == 0, base, 0.0)

    def fun(x):
        e, g, _ = prob.energy_and_gradient(base + P @ x)
        return e, P.T @ g

    res = scipy.optimize.minimize(
        fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
        options={"maxfun": budget, "maxiter": budget, "ftol": 1e-15, "gtol": gtol, "maxcor": 20},
    )
    full = base + P @ res.x
    e, c = prob.lowest(full)
    params = start.with_nonlinear(full).with_linear(c)
    # a stalled line search at machine precision still counts when the
    # projected gradient is small
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    pg = np.clip(res.x - res.jac, lo, hi) - res.x
    ok = bool(res.success) or float(np.max(np.abs(pg))) < 1e-6
    return e + 1.0 / prob.R, params, ok and res.nfev < budget, res


def optimize_energy(geometry: Geometry, field: FieldConfig, init: TrialParameters | None = None,
                    budget: int = 4000, restarts: int = 3, seed: int = 0,
                    rel_tol: float = DEFAULT_REL_TOL, gtol: float = 1e-9,
                    extra_starts: Sequence[TrialParameters] = ()) -> EnergyPoint:
    """Minimize the energy over all trial parameters at fixed geometry and field.

    ``budget`` bounds energy evaluations per local search; ``restarts`` extra
    searches start from random perturbations of ``init`` (seeded by ``seed``).
    ``extra_starts`` are searched as well.
    The best local minimum is returned.  At theta = 0 the Landau factors are
    tied (beta_x = beta_y) and at B = 0 only the exponents are varied.
    """
    if init is None:
        init = TrialParameters()
    init.validate(field.b)
    init = init.with_nonlinear(_clip(init.nonlinear_vector(), field.b))
    if _is_parallel(geometry.theta):
        init = init.symmetrized()
    rng = np.random.default_rng(seed)
    starts = [init] + [_perturb(init, field.b, rng) for _ in range(restarts)]
    for extra in extra_starts:
        extra.validate(field.b)
        extra = extra.with_nonlinear(_clip(extra.nonlinear_vector(), field.b))
        starts.append(extra.symmetrized() if _is_parallel(geometry.theta) else extra)

    rule, _ = choose_rule(init, geometry, field, rel_tol * 0.1)
    total_evals = 0
    best = None
    for attempt in range(3):
        prob = _Problem(geometry, field, rule)
        results = []
        for start in starts:
            results.append(_local_minimize(prob, start, budget, gtol))
        total_evals += prob.n_evals
        cand = min(results, key=lambda r: r[0])
        if best is None or cand[0] < best[0]:
            best = cand
        # verify the rule at the optimum and refine if it was too coarse
        needed = u_cutoff(geometry.r, 0.5 * _decay_rate(best[1]))
        fine = rule.refined()
        fine = SpheroidalRule(fine.level, max(fine.u_max, needed * 1.05))
        e_fine, _ = _Problem(geometry, field, fine).lowest(best[1].nonlinear_vector())
        err = abs(e_fine + 1.0 / geometry.r - best[0]) / abs(best[0])
        if err <= rel_tol and needed <= rule.u_max * 1.0001:
            break
        log.debug("refining quadrature at R=%g (err %.2e)", geometry.r, err)
        rule = fine
        starts = [best[1]]
    else:
        raise QuadratureError(f"quadrature error {err:.2e} above tolerance at R={geometry.r}", achieved=err)

    energy, params, ok, res = best
    if not ok:
        # a stalled line search is accepted when a fresh search from the
        # stall point gains nothing above the objective's rounding noise
        prob = _Problem(geometry, field, rule)
        again = _local_minimize(prob, params, budget, gtol)
        total_evals += prob.n_evals
        ok = again[2] or energy - again[0] < STALL_GAIN
        if again[0] < energy:
            energy, params, _, res = again
    return EnergyPoint(geometry, field, energy, params, err, converged=ok,
                       n_evals=total_evals, message=str(res.message))


@dataclass(frozen=True)
class Equilibrium:
    r_eq: float
    e_eq: float
    params: TrialParameters
    point: EnergyPoint
    evaluations: list = field(default_factory=list, compare=False, repr=False)


def find_equilibrium(theta: float, field_strength: float, bracket: tuple[float, float] = (1.4, 2.4),
                     init: TrialParameters | None = None, xatol: float = 1e-4,
                     restarts: int = 3, seed: int = 0, rel_tol: float = DEFAULT_REL_TOL,
                     budget: int = 4000) -> Equilibrium:
    """Locate the minimum of E(R) at fixed inclination and field.

    Bounded Brent search over R; each inner optimization is warm-started from
    the optimized parameters at the nearest R already visited.  Random
    restarts are only used for the first inner optimization.
    """
    lo, hi = bracket
    if not 0 < lo < hi:
        raise ValueError(f"invalid bracket {bracket}")
    fieldc = FieldConfig(field_strength, theta)
    cache: dict[float, EnergyPoint] = {}

    def energy(r):
        r = float(r)
        if r in cache:
            return cache[r].energy
        if cache:
            nearest = min(cache, key=lambda q: abs(q - r))
            start, nstart = cache[nearest].params, 0
        else:
            start, nstart = init, restarts
        pt = optimize_energy(Geometry(r, theta), fieldc, start, budget=budget,
                             restarts=nstart, seed=seed, rel_tol=rel_tol)
        cache[r] = pt
        return pt.energy

    res = scipy.optimize.minimize_scalar(energy, bounds=(lo, hi), method="bounded",
                                         options={"xatol": xatol})
    best_r = min(cache, key=lambda q: cache[q].energy)
    pt = cache[best_r]
    margin = 5 * xatol
    if best_r - lo < margin or hi - best_r < margin:
        raise OptimizationError(
            f"no interior minimum of E(R) in bracket [{lo}, {hi}] "
            f"(theta={math.degrees(theta):.1f} deg, B={field_strength})")
    if not res.success:
        log.warning("R search did not converge: %s", res.message)
    evals = sorted(cache.values(), key=lambda p: p.geometry.r)
    return Equilibrium(best_r, pt.energy, pt.params, pt, evals)


def scan_curve(theta: float, field_strength: float, r_values: Iterable[float],
               init: TrialParameters | None = None, restarts: int = 3, seed: int = 0,
               rel_tol: float = DEFAULT_REL_TOL, budget: int = 4000,
               restart_every_point: bool = False, backward: bool = True) -> list[EnergyPoint]:
    """Optimized energies along R, each point warm-started from the previous one.

    Every point also runs a search from the default parameters and keeps the
    lower minimum; pure continuation drifts into poorer basins at large R.
    With ``backward`` a second sweep in descending R, warm-started from the
    right-hand neighbour, replaces any point it improves.
    Failures are flagged on the returned points rather than aborting the scan.
    """
    rs = [float(r) for r in r_values]
    if any(r <= 0 for r in rs) or any(b <= a for a, b in zip(rs, rs[1:])):
        raise ValueError("r_values must be positive and strictly increasing")
    fieldc = FieldConfig(field_strength, theta)

    def attempt(r, start, n, extra):
        try:
            return optimize_energy(Geometry(r, theta), fieldc, start, restarts=n, seed=seed,
                                   rel_tol=rel_tol, budget=budget, extra_starts=extra)
        except (QuadratureError, ValueError) as exc:
            log.warning("scan point R=%g failed: %s", r, exc)
            return EnergyPoint(Geometry(r, theta), fieldc, math.nan, start or TrialParameters(),
                               math.nan, converged=False, message=str(exc))

    out = []
    prev = init
    for i, r in enumerate(rs):
        n = restarts if (i == 0 or restart_every_point) else 0
        pt = attempt(r, prev, n, (TrialParameters(),) if i > 0 else ())
        if math.isfinite(pt.energy):
            prev = pt.params
        out.append(pt)
    if backward:
        for i in range(len(rs) - 2, -1, -1):
            right = out[i + 1]
            if not math.isfinite(right.energy):
                continue
            pt = attempt(rs[i], right.params, 0, ())
            if math.isfinite(pt.energy) and not pt.energy >= out[i].energy:
                out[i] = pt
    return out
