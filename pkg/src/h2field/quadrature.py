"""Tensor-product Gauss rules in prolate spheroidal coordinates.

With lambda = cosh u and mu = cos v the two-center Coulomb singularities are
cancelled by the volume element and the trial-function integrands become
analytic in (u, v, phi), so Gauss-Legendre in u and v plus the trapezoid
rule in the periodic azimuth converge exponentially.  Accuracy is controlled
by p-refinement over a ladder of rule sizes; the difference between
consecutive rungs is the error estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

# (n_u, n_v, n_phi) per refinement level
LEVELS = (
    (32, 16, 12),
    (40, 20, 16),
    (48, 24, 20),
    (64, 32, 28),
    (96, 48, 40),
)

# exponent at which the radial tail of |psi|^2 is cut off
TAIL_EXPONENT = 38.0


class QuadratureError(RuntimeError):
    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


@dataclass(frozen=True)
class SpheroidalRule:
    level: int
    u_max: float
    full_azimuth: bool = False

    @property
    def shape(self):
        return LEVELS[self.level]

    def points(self, R: float):
        """Arrays (cosh u, sinh u, cos v, sin v, cos phi, sin phi, weight)."""
        cu, shu, cv, sv, cph, sph, w = _unit_rule(self.level, round(self.u_max, 10), self.full_azimuth)
        return cu, shu, cv, sv, cph, sph, w * R**3

    def refined(self) -> "SpheroidalRule":
        if self.level + 1 >= len(LEVELS):
            raise QuadratureError("no finer quadrature level available")
        return SpheroidalRule(self.level + 1, self.u_max * 1.1, self.full_azimuth)


def u_cutoff(R: float, decay_rate: float) -> float:
    """Radial cutoff so that exp(-rate * R * (cosh u - 1)) < exp(-TAIL_EXPONENT)."""
    c = max(decay_rate * R, 1e-3)
    return float(min(max(math.acosh(1.0 + TAIL_EXPONENT / c), 2.0), 10.0))


@lru_cache(maxsize=64)
def _unit_rule(level: int, u_max: float, full_azimuth: bool):
    nu, nv, nphi = LEVELS[level]
    xu, wu = leggauss(nu)
    u = 0.5 * u_max * (xu + 1.0)
    wu = 0.5 * u_max * wu
    xv, wv = leggauss(nv)
    if full_azimuth:
        v = 0.5 * math.pi * (xv + 1.0)
        wv = 0.5 * math.pi * wv
        phi = np.arange(2 * nphi) * (math.pi / nphi)
        wphi = np.full(2 * nphi, math.pi / nphi)
    else:
        # inversion through the origin maps v -> pi - v; fold onto v < pi/2
        v = 0.25 * math.pi * (xv + 1.0)
        wv = 0.5 * math.pi * wv
        # integrand even under y -> -y; trapezoid on [0, pi] with half ends
        phi = np.linspace(0.0, math.pi, nphi + 1)
        wphi = np.full(nphi + 1, 2.0 * math.pi / nphi)
        wphi[0] *= 0.5
        wphi[-1] *= 0.5
    U, Vv, P = np.meshgrid(u, v, phi, indexing="ij")
    W = wu[:, None, None] * wv[None, :, None] * wphi[None, None, :]
    cu = np.cosh(U).ravel()
    shu = np.sinh(U).ravel()
    cv = np.cos(Vv).ravel()
    sv = np.sin(Vv).ravel()
    jac = 0.125 * (cu**2 - cv**2) * shu * sv
    arrays = [cu, shu, cv, sv, np.cos(P).ravel(), np.sin(P).ravel(), W.ravel() * jac]
    for a in arrays:
        a.setflags(write=False)
    return tuple(arrays)
