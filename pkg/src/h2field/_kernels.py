"""Compiled integrand loops for the three-term trial function.

Points are given in prolate spheroidal form (cosh u, sinh u, cos v, sin v,
cos phi, sin phi) with weights that already include the volume element.
The molecule lies in the x-z plane with nucleus 1 at +(R/2)(sin t, 0, cos t).

Basis pieces (each a single exponential exp(phi_k)):
    k=0: term 1, -a1 (r1 + r2)
    k=1: term 2, -a2 r1        k=2: term 2, -a2 r2
    k=3: term 3, -a3 r1 - a4 r2  k=4: term 3, -a3 r2 - a4 r1
each plus the Landau exponent -B (bx xi x^2 + by (1 - xi) y^2) of its term.

Parameter order for gradients: a1..a4, bx1..bx3, by1..by3, xi.
"""

import numpy as np
from numba import njit

NPARAM = 11
_TERM = (0, 1, 1, 2, 2)


@njit(cache=True, nogil=True)
def _geometry(k, R, st, ct, cu, shu, cv, sv, cph, sph):
    h = 0.5 * R
    s = shu[k] * sv[k]
    xp = h * s * cph[k]
    yp = h * s * sph[k]
    zp = h * cu[k] * cv[k]
    x = zp * st + xp * ct
    y = yp
    z = zp * ct - xp * st
    r1 = h * (cu[k] - cv[k])
    r2 = h * (cu[k] + cv[k])
    return x, y, z, r1, r2


@njit(cache=True, nogil=True)
def _pieces(x, y, z, r1, r2, R, st, ct, B, xi, alpha, bx, by, e, gphi, rhat):
    """Fill piece values ``e[k]`` and exponent gradients ``gphi[k, :]``."""
    h = 0.5 * R
    n1x = h * st
    n1z = h * ct
    rhat[0, 0] = (x - n1x) / r1
    rhat[0, 1] = y / r1
    rhat[0, 2] = (z - n1z) / r1
    rhat[1, 0] = (x + n1x) / r2
    rhat[1, 1] = y / r2
    rhat[1, 2] = (z + n1z) / r2
    x2 = x * x
    y2 = y * y
    for k in range(5):
        t = _TERM[k]
        if k == 0:
            c1 = alpha[0]
            c2 = alpha[0]
        elif k == 1:
            c1 = alpha[1]
            c2 = 0.0
        elif k == 2:
            c1 = 0.0
            c2 = alpha[1]
        elif k == 3:
            c1 = alpha[2]
            c2 = alpha[3]
        else:
            c1 = alpha[3]
            c2 = alpha[2]
        gexp = -B * (bx[t] * xi * x2 + by[t] * (1.0 - xi) * y2)
        e[k] = np.exp(-c1 * r1 - c2 * r2 + gexp)
        gphi[k, 0] = -c1 * rhat[0, 0] - c2 * rhat[1, 0] - 2.0 * B * bx[t] * xi * x
        gphi[k, 1] = -c1 * rhat[0, 1] - c2 * rhat[1, 1] - 2.0 * B * by[t] * (1.0 - xi) * y
        gphi[k, 2] = -c1 * rhat[0, 2] - c2 * rhat[1, 2]


@njit(cache=True, nogil=True)
def matrices(R, st, ct, B, xi, alpha, bx, by, cu, shu, cv, sv, cph, sph, w):
    """Overlap, kinetic and potential matrices over the three terms.

    Kinetic energy uses the gradient form (1/2) grad(psi_i) . grad(psi_j).
    The potential includes the Coulomb attraction and the diamagnetic term.
    """
    S = np.zeros((3, 3))
    T = np.zeros((3, 3))
    V = np.zeros((3, 3))
    e = np.empty(5)
    gphi = np.empty((5, 3))
    rhat = np.empty((2, 3))
    f = np.empty(3)
    g = np.empty((3, 3))
    for k in range(w.size):
        x, y, z, r1, r2 = _geometry(k, R, st, ct, cu, shu, cv, sv, cph, sph)
        _pieces(x, y, z, r1, r2, R, st, ct, B, xi, alpha, bx, by, e, gphi, rhat)
        f[:] = 0.0
        g[:, :] = 0.0
        for p in range(5):
            t = _TERM[p]
            f[t] += e[p]
            for d in range(3):
                g[t, d] += e[p] * gphi[p, d]
        pot = 0.5 * B * B * (xi * xi * x * x + (1.0 - xi) ** 2 * y * y) - 1.0 / r1 - 1.0 / r2
        wk = w[k]
        for i in range(3):
            for j in range(i, 3):
                ff = wk * f[i] * f[j]
                S[i, j] += ff
                V[i, j] += ff * pot
                T[i, j] += 0.5 * wk * (g[i, 0] * g[j, 0] + g[i, 1] * g[j, 1] + g[i, 2] * g[j, 2])
    for i in range(3):
        for j in range(i):
            S[i, j] = S[j, i]
            T[i, j] = T[j, i]
            V[i, j] = V[j, i]
    return S, T, V


@njit(cache=True, nogil=True)
def gradient(R, st, ct, B, xi, alpha, bx, by, coef, e_elec, cu, shu, cv, sv, cph, sph, w):
    """Derivative of the electronic Rayleigh quotient w.r.t. the 11 parameters.

    ``coef`` are the linear coefficients and ``e_elec`` the corresponding
    electronic energy (without nuclear repulsion).
    """
    acc = np.zeros(NPARAM)
    norm = 0.0
    e = np.empty(5)
    gphi = np.empty((5, 3))
    rhat = np.empty((2, 3))
    dpsi = np.empty(NPARAM)
    dgrad = np.empty((NPARAM, 3))
    for k in range(w.size):
        x, y, z, r1, r2 = _geometry(k, R, st, ct, cu, shu, cv, sv, cph, sph)
        _pieces(x, y, z, r1, r2, R, st, ct, B, xi, alpha, bx, by, e, gphi, rhat)
        psi = 0.0
        gx = 0.0
        gy = 0.0
        gz = 0.0
        dpsi[:] = 0.0
        dgrad[:, :] = 0.0
        for p in range(5):
            t = _TERM[p]
            ce = coef[t] * e[p]
            psi += ce
            gx += ce * gphi[p, 0]
            gy += ce * gphi[p, 1]
            gz += ce * gphi[p, 2]
            # exponent derivatives q and their gradients for this piece
            if p == 0:
                _acc_piece(dpsi, dgrad, 0, ce, -(r1 + r2), -(rhat[0, 0] + rhat[1, 0]),
                           -(rhat[0, 1] + rhat[1, 1]), -(rhat[0, 2] + rhat[1, 2]), gphi, p)
            elif p == 1:
                _acc_piece(dpsi, dgrad, 1, ce, -r1, -rhat[0, 0], -rhat[0, 1], -rhat[0, 2], gphi, p)
            elif p == 2:
                _acc_piece(dpsi, dgrad, 1, ce, -r2, -rhat[1, 0], -rhat[1, 1], -rhat[1, 2], gphi, p)
            elif p == 3:
                _acc_piece(dpsi, dgrad, 2, ce, -r1, -rhat[0, 0], -rhat[0, 1], -rhat[0, 2], gphi, p)
                _acc_piece(dpsi, dgrad, 3, ce, -r2, -rhat[1, 0], -rhat[1, 1], -rhat[1, 2], gphi, p)
            else:
                _acc_piece(dpsi, dgrad, 2, ce, -r2, -rhat[1, 0], -rhat[1, 1], -rhat[1, 2], gphi, p)
                _acc_piece(dpsi, dgrad, 3, ce, -r1, -rhat[0, 0], -rhat[0, 1], -rhat[0, 2], gphi, p)
            _acc_piece(dpsi, dgrad, 4 + t, ce, -B * xi * x * x, -2.0 * B * xi * x, 0.0, 0.0, gphi, p)
            _acc_piece(dpsi, dgrad, 7 + t, ce, -B * (1.0 - xi) * y * y, 0.0,
                       -2.0 * B * (1.0 - xi) * y, 0.0, gphi, p)
            _acc_piece(dpsi, dgrad, 10, ce, -B * (bx[t] * x * x - by[t] * y * y),
                       -2.0 * B * bx[t] * x, 2.0 * B * by[t] * y, 0.0, gphi, p)
        pot = 0.5 * B * B * (xi * xi * x * x + (1.0 - xi) ** 2 * y * y) - 1.0 / r1 - 1.0 / r2
        wk = w[k]
        psi2 = psi * psi
        norm += wk * psi2
        vme = 2.0 * (pot - e_elec) * psi
        for q in range(NPARAM):
            acc[q] += wk * (dgrad[q, 0] * gx + dgrad[q, 1] * gy + dgrad[q, 2] * gz + vme * dpsi[q])
        acc[10] += wk * B * B * (xi * x * x - (1.0 - xi) * y * y) * psi2
    return acc / norm


@njit(cache=True, nogil=True)
def _acc_piece(dpsi, dgrad, q, ce, dq, gqx, gqy, gqz, gphi, p):
    dpsi[q] += ce * dq
    dgrad[q, 0] += ce * (gqx + dq * gphi[p, 0])
    dgrad[q, 1] += ce * (gqy + dq * gphi[p, 1])
    dgrad[q, 2] += ce * (gqz + dq * gphi[p, 2])


@njit(cache=True, nogil=True)
def moments(R, st, ct, B, xi, alpha, bx, by, coef, cu, shu, cv, sv, cph, sph, w):
    """Return norm and unnormalized sums of x^2, y^2, z^2, xz over psi^2."""
    out = np.zeros(5)
    e = np.empty(5)
    gphi = np.empty((5, 3))
    rhat = np.empty((2, 3))
    for k in range(w.size):
        x, y, z, r1, r2 = _geometry(k, R, st, ct, cu, shu, cv, sv, cph, sph)
        _pieces(x, y, z, r1, r2, R, st, ct, B, xi, alpha, bx, by, e, gphi, rhat)
        psi = 0.0
        for p in range(5):
            psi += coef[_TERM[p]] * e[p]
        wp = w[k] * psi * psi
        out[0] += wp
        out[1] += wp * x * x
        out[2] += wp * y * y
        out[3] += wp * z * z
        out[4] += wp * x * z
    return out


@njit(cache=True, nogil=True)
def gauge_term(R, st, ct, B, xi, alpha, bx, by, coef, cu, shu, cv, sv, cph, sph, w):
    """Norm and the integral of psi [(xi - 1) y d/dx + xi x d/dy] psi.

    Needs a grid covering the full azimuth since the integrand is odd in y.
    """
    norm = 0.0
    lin = 0.0
    e = np.empty(5)
    gphi = np.empty((5, 3))
    rhat = np.empty((2, 3))
    for k in range(w.size):
        x, y, z, r1, r2 = _geometry(k, R, st, ct, cu, shu, cv, sv, cph, sph)
        _pieces(x, y, z, r1, r2, R, st, ct, B, xi, alpha, bx, by, e, gphi, rhat)
        psi = 0.0
        gx = 0.0
        gy = 0.0
        for p in range(5):
            ce = coef[_TERM[p]] * e[p]
            psi += ce
            gx += ce * gphi[p, 0]
            gy += ce * gphi[p, 1]
        norm += w[k] * psi * psi
        lin += w[k] * psi * ((xi - 1.0) * y * gx + xi * x * gy)
    return norm, lin
