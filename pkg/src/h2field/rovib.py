"""Rovibrational levels of the homonuclear ion on a hindered-rotor surface.

Radial functions are the lowest eigenstates of the vibrational problem

    -(2/M_s) chi'' + U(R) chi = E chi,   U(R) = V(R, 0)

with Dirichlet conditions on a uniform mesh, solved by the renormalized
Numerov method (ratio recurrences with Sturm node counting and bisection).
The rovibrational Hamiltonian is then assembled in the product basis
xi_v(R)/R Y_L^M and diagonalized block by block in (M, z-parity).
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from numba import njit
from scipy.optimize import linear_sum_assignment

from .core import NuclearSpecies
from .surface import HinderedRotorPotential, PotentialSurface, decompose_hindered_rotor

log = logging.getLogger(__name__)

RADIAL_RANGE = (0.4, 12.0)
RADIAL_POINTS = 4001
L_MARGIN = 4
TAIL_LIMIT = 1e-10
MIXED_THRESHOLD = 0.01


class RadialGridError(RuntimeError):
    pass


# -- Wigner 3j -------------------------------------------------------------

def _as_int(x) -> int:
    i = int(round(x))
    if abs(x - i) > 1e-12:
        raise ValueError(f"wigner3j takes integer arguments, got {x!r}")
    return i


@lru_cache(maxsize=65536)
def _w3j(l1, l2, l3, m1, m2, m3) -> float:
    if m1 + m2 + m3 != 0:
        return 0.0
    if l1 < 0 or l2 < 0 or l3 < 0 or abs(m1) > l1 or abs(m2) > l2 or abs(m3) > l3:
        return 0.0
    if l3 > l1 + l2 or l3 < abs(l1 - l2):
        return 0.0
    f = math.factorial
    # integer arithmetic: float cancellation leaves ~1e-17 at accidental zeros
    delta = Fraction(f(l1 + l2 - l3) * f(l1 - l2 + l3) * f(-l1 + l2 + l3), f(l1 + l2 + l3 + 1))
    proj = (f(l1 + m1) * f(l1 - m1) * f(l2 + m2) * f(l2 - m2) * f(l3 + m3) * f(l3 - m3))
    k_lo = max(0, l2 - l3 - m1, l1 - l3 + m2)
    k_hi = min(l1 + l2 - l3, l1 - m1, l2 + m2)
    total = Fraction(0)
    for k in range(k_lo, k_hi + 1):
        den = (f(k) * f(l3 - l2 + k + m1) * f(l3 - l1 + k - m2)
               * f(l1 + l2 - l3 - k) * f(l1 - k - m1) * f(l2 - k + m2))
        total += Fraction((-1) ** k, den)
    if total == 0:
        return 0.0
    mag = math.sqrt(total * total * delta * proj)
    return (-1.0) ** (l1 - l2 - m3) * math.copysign(mag, total)


def wigner3j(l1, l2, l3, m1, m2, m3) -> float:
    """Wigner 3j symbol (l1 l2 l3; m1 m2 m3) for integer arguments.

    Racah's closed-form sum in exact rational arithmetic.  Returns 0 when
    the triangle or projection rules are violated.
    """
    return _w3j(*(_as_int(a) for a in (l1, l2, l3, m1, m2, m3)))


def sin2_element(lp: int, mp: int, l: int, m: int) -> float:
    """Angular matrix element <L' M'| sin^2 theta |L M>.

    Uses sin^2 = 2/3 - (2/3) sqrt(4 pi / 5) Y_2^0 and the Gaunt integral.
    """
    if mp != m:
        return 0.0
    diag = 2.0 / 3.0 if lp == l else 0.0
    g = ((-1.0) ** mp * math.sqrt((2 * lp + 1) * (2 * l + 1))
         * wigner3j(lp, 2, l, 0, 0, 0) * wigner3j(lp, 2, l, -mp, 0, m))
    return diag - 2.0 / 3.0 * g


# -- radial problem --------------------------------------------------------

@dataclass(frozen=True)
class RadialProblem:
    """Vibrational problem on a uniform mesh.

    ``potential`` maps an array of R (bohr) to V(R, 0) in hartree.  The
    effective potential adds B^2 R^2 sin^2(theta_ref) / (8 M_s), which
    vanishes for the reference orientation theta_ref = 0.
    """

    species: NuclearSpecies
    b: float
    potential: Callable = field(repr=False)
    r_min: float = RADIAL_RANGE[0]
    r_max: float = RADIAL_RANGE[1]
    n_points: int = RADIAL_POINTS
    theta_ref: float = 0.0

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")
        if self.n_points < 5 or self.n_points % 2 == 0:
            raise ValueError("radial mesh needs an odd number of points (>= 5) for Simpson weights")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.r_min, self.r_max, self.n_points)

    @property
    def kinetic(self) -> float:
        return 2.0 / self.species.total_mass

    def effective_potential(self) -> np.ndarray:
        r = self.grid
        u = np.asarray(self.potential(r), dtype=float)
        if u.shape != r.shape or not np.all(np.isfinite(u)):
            raise ValueError("potential must be finite on the radial mesh")
        ms = self.species.total_mass
        return u + self.b**2 * r**2 * math.sin(self.theta_ref) ** 2 / (8.0 * ms)


@dataclass(frozen=True)
class RadialBasis:
    r: np.ndarray
    energies: np.ndarray
    functions: np.ndarray
    problem: RadialProblem = field(repr=False, compare=False)

    @property
    def v_max(self) -> int:
        return len(self.energies) - 1

    @property
    def weights(self) -> np.ndarray:
        return simpson_weights(self.r)


def simpson_weights(r: np.ndarray) -> np.ndarray:
    n = r.size
    if n % 2 == 0:
        raise ValueError("Simpson weights need an odd number of points")
    h = (r[-1] - r[0]) / (n - 1)
    w = np.full(n, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * h / 3.0


@njit(cache=True)
def _count_below(u_coef, e, scale):
    """Number of Dirichlet eigenvalues below ``e`` (negative outward ratios)."""
    n = u_coef.size
    count = 0
    ratio = 1e300
    for i in range(1, n - 1):
        t = scale * (u_coef[i] - e)
        ratio = 12.0 / (1.0 - t) - 10.0 - 1.0 / ratio
        if ratio < 0.0:
            count += 1
    return count


@njit(cache=True)
def _eigenfunction(u_coef, e, scale, match):
    n = u_coef.size
    t = scale * (u_coef - e)
    uu = 12.0 / (1.0 - t) - 10.0
    f = np.zeros(n)
    out = np.empty(n)
    out[0] = 1e300
    for i in range(1, match):
        out[i] = uu[i] - 1.0 / out[i - 1]
    inn = np.empty(n)
    inn[n - 1] = 1e300
    for i in range(n - 2, match, -1):
        inn[i] = uu[i] - 1.0 / inn[i + 1]
    f[match] = 1.0
    for i in range(match - 1, 0, -1):
        f[i] = f[i + 1] / out[i]
    for i in range(match + 1, n - 1):
        f[i] = f[i - 1] / inn[i]
    return f / (1.0 - t)


def numerov_solve(problem: RadialProblem, v_max: int = 3, e_tol: float = 1e-13) -> RadialBasis:
    """Lowest ``v_max + 1`` eigenpairs of the vibrational problem.

    Eigenvalues are bracketed by Sturm counting and bisected to ``e_tol``;
    eigenfunctions are matched at the outer classical turning point and
    normalized with Simpson's rule.
    """
    if v_max < 0:
        raise ValueError("v_max must be >= 0")
    r = problem.grid
    u = problem.effective_potential()
    h = r[1] - r[0]
    scale = h * h / 12.0 / problem.kinetic
    lo0 = float(np.min(u))
    hi0 = float(min(u[0], u[-1]))
    if _count_below(u, hi0, scale) < v_max + 1:
        raise RadialGridError(f"fewer than {v_max + 1} bound states below the boundary potential "
                              f"{hi0:.6f}; extend the radial grid")
    w = simpson_weights(r)
    energies, funcs = [], []
    for v in range(v_max + 1):
        lo, hi = lo0, hi0
        if _count_below(u, lo, scale) > v:
            raise RadialGridError(f"could not bracket eigenvalue v={v}")
        while hi - lo > e_tol * max(1.0, abs(hi)):
            mid = 0.5 * (lo + hi)
            if _count_below(u, mid, scale) > v:
                hi = mid
            else:
                lo = mid
        e = 0.5 * (lo + hi)
        inside = np.nonzero(u < e)[0]
        match = int(np.clip(inside[-1], 2, r.size - 3))
        y = _eigenfunction(u, e, scale, match)
        y /= math.sqrt(float(np.dot(w, y * y)))
        # sign convention: positive slope near the inner turning point
        if y[inside[0]] < 0:
            y = -y
        peak = np.max(np.abs(y))
        tail = max(abs(y[1]), abs(y[-2])) / peak
        if tail > TAIL_LIMIT:
            raise RadialGridError(f"v={v} wavefunction tail {tail:.1e} at the grid boundary")
        energies.append(e)
        funcs.append(y)
    E = np.array(energies)
    F = np.array(funcs)
    E.setflags(write=False)
    F.setflags(write=False)
    return RadialBasis(r, E, F, problem)


def count_nodes(y: np.ndarray, rel_floor: float = 1e-8) -> int:
    """Sign changes of ``y`` ignoring values below ``rel_floor`` of its peak."""
    y = np.asarray(y)
    big = y[np.abs(y) > rel_floor * np.max(np.abs(y))]
    return int(np.sum(np.signbit(big[1:]) != np.signbit(big[:-1])))


def radial_matrix_elements(basis: RadialBasis, weight) -> np.ndarray:
    """Symmetric matrix <v'| w(R) |v> by Simpson quadrature on the basis mesh.

    ``weight`` is an array on the mesh or a callable of R.
    """
    r = basis.r
    wv = weight(r) if callable(weight) else weight
    wv = np.asarray(wv, dtype=float)
    if wv.shape != r.shape:
        raise ValueError(f"weight has {wv.shape} values but the radial mesh has {r.shape}")
    if not np.all(np.isfinite(wv)):
        raise ValueError("weight must be finite on the radial mesh")
    F = basis.functions
    A = (F * (basis.weights * wv)) @ F.T
    return 0.5 * (A + A.T)


# -- Hamiltonian -------------------------------------------------------------

def parity_allowed(species: NuclearSpecies, m: int, v: int, parity: int) -> bool:
    """Exchange-symmetry selection rule for the z-parity of level (M, v)."""
    if species.fermionic:
        return parity == (-1) ** (m + v + 1)
    return parity == (-1) ** (m + v)


@dataclass(frozen=True)
class CouplingBlock:
    """Basis (v, L) pairs of one (M, z-parity) block with radial matrices."""

    m: int
    parity: int
    v_values: tuple[int, ...]
    l_values: tuple[int, ...]
    r_inv2: np.ndarray
    r2: np.ndarray
    v90: np.ndarray
    allowed: bool = True

    @property
    def labels(self) -> list[tuple[int, int]]:
        return [(v, l) for v in self.v_values for l in self.l_values]


@dataclass(frozen=True)
class RadialMatrices:
    r_inv2: np.ndarray
    r2: np.ndarray
    v90: np.ndarray


def radial_matrices(basis: RadialBasis, rotor: HinderedRotorPotential) -> RadialMatrices:
    r = basis.r
    return RadialMatrices(radial_matrix_elements(basis, r**-2.0),
                          radial_matrix_elements(basis, r**2),
                          radial_matrix_elements(basis, rotor.v90(r)))


def coupling_block(mats: RadialMatrices, m: int, parity: int, v_values: Sequence[int],
                   l_max_internal: int, allowed: bool = True) -> CouplingBlock:
    if parity not in (1, -1):
        raise ValueError("parity must be +1 or -1")
    ls = tuple(l for l in range(abs(m), l_max_internal + 1) if (-1) ** (l + m) == parity)
    if not ls:
        raise ValueError(f"no L values for M={m}, parity={parity} up to L={l_max_internal}")
    vs = tuple(int(v) for v in v_values)
    idx = np.array(vs)
    sub = lambda a: a[np.ix_(idx, idx)]
    return CouplingBlock(m, parity, vs, ls, sub(mats.r_inv2), sub(mats.r2), sub(mats.v90), allowed)


def matrix_element(energies, mats: RadialMatrices, ms: float, b: float,
                   vp: int, lp: int, mp: int, v: int, l: int, m: int) -> float:
    """<v' L' M'| H |v L M> for the one-term rotor with reference theta' = 0."""
    out = 0.0
    if lp == l and mp == m:
        if vp == v:
            out += energies[v] - b * m / ms
        out += 2.0 / ms * mats.r_inv2[vp, v] * l * (l + 1)
    ang = sin2_element(lp, mp, l, m)
    if ang != 0.0:
        out += (b * b / (8.0 * ms) * mats.r2[vp, v] + mats.v90[vp, v]) * ang
    return out


def assemble_hamiltonian(block: CouplingBlock, basis: RadialBasis, species: NuclearSpecies,
                         field_strength: float, model: int = 2) -> np.ndarray:
    """Hamiltonian matrix over the (v, L) pairs of ``block``.

    Model 1 keeps only elements diagonal in v; model 2 keeps all of them.
    """
    if model not in (1, 2):
        raise ValueError("model must be 1 or 2")
    if max(block.v_values) > basis.v_max:
        raise ValueError("block references vibrational states missing from the radial basis")
    ms = species.total_mass
    mats = RadialMatrices(_embed(block.r_inv2, block.v_values, basis.v_max),
                          _embed(block.r2, block.v_values, basis.v_max),
                          _embed(block.v90, block.v_values, basis.v_max))
    labels = block.labels
    n = len(labels)
    H = np.zeros((n, n))
    for i, (vp, lp) in enumerate(labels):
        for j, (v, l) in enumerate(labels):
            if model == 1 and vp != v:
                continue
            H[i, j] = matrix_element(basis.energies, mats, ms, field_strength,
                                     vp, lp, block.m, v, l, block.m)
    return 0.5 * (H + H.T)


def _embed(sub, v_values, v_max):
    full = np.zeros((v_max + 1, v_max + 1))
    idx = np.array(v_values)
    full[np.ix_(idx, idx)] = sub
    return full


@dataclass(frozen=True)
class RovibLevel:
    energy: float
    m: int
    z_parity: int
    dominant_v: int
    dominant_l: int
    model: int
    species: str
    b: float
    coefficients: tuple = field(repr=False, default=())
    labels: tuple = field(repr=False, default=())
    mixed: bool = False
    allowed: bool = True


def assign_labels(vectors: np.ndarray, labels) -> list[tuple[tuple[int, int], bool]]:
    """Dominant (v, L) label for every eigenvector (columns of ``vectors``).

    Labels come from the largest |c|^2; when two eigenvectors of a block
    share the same largest component the labels are made one-to-one by the
    assignment maximizing the summed weights.  A level is flagged mixed
    when its two largest weights are within 1% or when it did not get its
    argmax label; exact ties go to the lower L.
    """
    p = vectors**2
    n_basis, n_vec = p.shape
    arg = np.argmax(p, axis=0)
    chosen = arg.copy()
    if len(set(arg.tolist())) < n_vec:
        rows, cols = linear_sum_assignment(-p.T)
        chosen[rows] = cols
    out = []
    for k in range(n_vec):
        col = p[:, k]
        order = np.argsort(-col, kind="stable")
        best = chosen[k]
        mixed = best != arg[k]
        if n_basis > 1 and col[order[1]] >= (1.0 - MIXED_THRESHOLD) * col[order[0]]:
            mixed = True
            if best == order[0] and labels[order[1]][1] < labels[best][1] and order[1] not in chosen:
                best = order[1]
        out.append((labels[best], bool(mixed)))
    return out


def _as_rotor(potential) -> HinderedRotorPotential:
    if isinstance(potential, HinderedRotorPotential):
        return potential
    if isinstance(potential, PotentialSurface):
        potential.require_usable()
        return decompose_hindered_rotor(potential, 1)
    raise TypeError("potential must be a PotentialSurface or HinderedRotorPotential")


def radial_basis_for(species: NuclearSpecies, rotor: HinderedRotorPotential, v_max: int,
                     n_points: int = RADIAL_POINTS, r_range=RADIAL_RANGE) -> RadialBasis:
    lo, hi = rotor.r_range
    if r_range[0] < lo - 1e-12 or r_range[1] > hi + 1e-12:
        raise RadialGridError(f"radial grid {r_range} exceeds the tabulated potential range [{lo}, {hi}]")
    prob = RadialProblem(species, rotor.b, rotor.v0, r_range[0], r_range[1], n_points)
    return numerov_solve(prob, v_max)


def solve_levels(species: NuclearSpecies | str, field_strength: float, potential,
                 v_max: int = 3, l_max: int = 5, models: Iterable[int] = (1, 2),
                 include_forbidden: bool = False, n_points: int = RADIAL_POINTS,
                 l_margin: int = L_MARGIN, basis: RadialBasis | None = None) -> list[RovibLevel]:
    """Rovibrational levels with dominant v <= v_max and L <= l_max.

    Each (M, z-parity) block contains the vibrational states of the parity
    fixed by the exchange symmetry of the nuclei; blocks of the opposite
    vibrational parity are only solved with ``include_forbidden`` and their
    levels are flagged ``allowed=False``.  Internally L runs to
    ``l_max + l_margin`` so the Delta L = 2 coupling is converged at L = l_max.
    """
    if isinstance(species, str):
        species = NuclearSpecies.from_name(species)
    if field_strength < 0:
        raise ValueError("field strength must be >= 0")
    rotor = _as_rotor(potential)
    if abs(rotor.b - field_strength) > 1e-12:
        raise ValueError(f"potential was computed at B={rotor.b}, not B={field_strength}")
    if basis is None:
        basis = radial_basis_for(species, rotor, v_max, n_points)
    mats = radial_matrices(basis, rotor)
    l_int = l_max + l_margin
    levels = []
    for model in models:
        for m in range(-l_max, l_max + 1):
            for parity in (1, -1):
                for vpar in (0, 1):
                    vs = [v for v in range(v_max + 1) if v % 2 == vpar]
                    if not vs:
                        continue
                    ok = parity_allowed(species, m, vpar, parity)
                    if not (ok or include_forbidden):
                        continue
                    try:
                        block = coupling_block(mats, m, parity, vs, l_int, ok)
                    except ValueError:
                        continue
                    H = assemble_hamiltonian(block, basis, species, field_strength, model)
                    try:
                        evals, evecs = np.linalg.eigh(H)
                    except np.linalg.LinAlgError as exc:
                        raise RuntimeError(f"eigensolver failed for block M={m}, parity={parity}, "
                                           f"v parity={vpar}, model={model}") from exc
                    labels = block.labels
                    for k, ((v, l), mixed) in enumerate(assign_labels(evecs, labels)):
                        if v > v_max or l > l_max:
                            continue
                        levels.append(RovibLevel(float(evals[k]), m, parity, v, l, model,
                                                 species.name, field_strength,
                                                 tuple(evecs[:, k]), tuple(labels), mixed, ok))
    levels.sort(key=lambda x: (x.model, x.energy, x.m, x.z_parity))
    return levels


LEVEL_COLUMNS = ("species", "B", "model", "M", "parity", "v_label", "L_label", "energy_hartree")


def write_levels_csv(levels: Iterable[RovibLevel], path, annotate: bool = False) -> None:
    cols = LEVEL_COLUMNS + (("allowed", "mixed") if annotate else ())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for lv in levels:
            row = [lv.species, f"{lv.b:.6f}", lv.model, lv.m, lv.z_parity, lv.dominant_v,
                   lv.dominant_l, f"{lv.energy:.12f}"]
            if annotate:
                row += [int(lv.allowed), int(lv.mixed)]
            w.writerow(row)
