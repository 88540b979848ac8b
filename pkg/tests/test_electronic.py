import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import TABLE1
from h2field import electronic as el
from h2field.core import FieldConfig
from h2field.electronic import (EnergyPoint, Geometry, OptimizationError, TrialParameters,
                                find_equilibrium, gauge_linear_term, optimize_energy,
                                rayleigh_quotient, scan_curve, trial_value)
from h2field.quadrature import QuadratureError, SpheroidalRule
from oracles import heitler_london_terms

GENERIC = TrialParameters(alpha1=0.9, alpha2=1.3, alpha3=1.1, alpha4=0.4, beta1x=0.3, beta1y=0.7,
                          beta2x=0.5, beta2y=0.2, beta3x=0.8, beta3y=0.4, a1=1.0, a2=0.4,
                          a3=-0.2, xi=0.3)


# -- trial function --------------------------------------------------------------

def test_heitler_london_midpoint_amplitude():
    p = TrialParameters(alpha1=1.0, a2=0.0, a3=0.0)
    assert trial_value(p, Geometry(2.0, 0.4), FieldConfig(0.0, 0.4), [0, 0, 0]) == pytest.approx(math.exp(-2))


@settings(max_examples=60, deadline=None)
@given(pos=st.lists(st.floats(-4, 4), min_size=3, max_size=3),
       theta=st.floats(0, math.pi / 2), r=st.floats(0.5, 5),
       alphas=st.lists(st.floats(0.2, 3), min_size=4, max_size=4),
       xi=st.floats(0, 1), b=st.floats(0, 1))
def test_exchange_symmetry(pos, theta, r, alphas, xi, b):
    p = TrialParameters(*alphas, xi=xi, beta1x=0.3, beta2y=0.9, a2=0.7, a3=-0.4)
    g, f = Geometry(r, theta), FieldConfig(b, theta)
    x = np.array(pos)
    # inversion through the midpoint swaps the nuclei and keeps x^2, y^2
    assert trial_value(p, g, f, -x) == pytest.approx(trial_value(p, g, f, x), rel=1e-12, abs=1e-300)
    if b == 0:
        n = np.array([math.sin(theta), 0.0, math.cos(theta)])
        mirrored = x - 2 * np.dot(x, n) * n
        assert trial_value(p, g, f, mirrored) == pytest.approx(trial_value(p, g, f, x), rel=1e-12)


def test_field_factor_oracle():
    g = Geometry(1.8, 0.7)
    x = np.array([0.3, -0.5, 0.9])
    p = GENERIC
    free = trial_value(p, g, FieldConfig(0.0, 0.7), x)
    n1, n2 = g.nuclei
    r1, r2 = np.linalg.norm(x - n1), np.linalg.norm(x - n2)
    a, B = p.alpha, 0.2
    gauss = [math.exp(-B * (bx * p.xi * x[0] ** 2 + by * (1 - p.xi) * x[1] ** 2))
             for bx, by in zip(p.beta_x, p.beta_y)]
    terms = [math.exp(-a[0] * (r1 + r2)),
             math.exp(-a[1] * r1) + math.exp(-a[1] * r2),
             math.exp(-a[2] * r1 - a[3] * r2) + math.exp(-a[2] * r2 - a[3] * r1)]
    expect = sum(c * t * gz for c, t, gz in zip(p.linear, terms, gauss))
    assert trial_value(p, g, FieldConfig(B, 0.7), x) == pytest.approx(expect, rel=1e-13)
    assert free == pytest.approx(sum(c * t for c, t in zip(p.linear, terms)), rel=1e-13)


def test_invalid_inputs_rejected():
    with pytest.raises(ValueError):
        TrialParameters(alpha1=math.nan)
    with pytest.raises(ValueError):
        trial_value(GENERIC, Geometry(2.0), FieldConfig(), [0, math.inf, 0])
    with pytest.raises(ValueError):
        Geometry(0.0)
    with pytest.raises(ValueError):
        TrialParameters(xi=1.5).validate()
    with pytest.raises(ValueError):
        TrialParameters(beta1x=-0.1).validate(0.2)


# -- energies ---------------------------------------------------------------------

@pytest.mark.parametrize("alpha,r", [(1.0, 2.0), (1.3, 1.4), (0.7, 4.0)])
def test_heitler_london_analytic(alpha, r):
    p = TrialParameters(alpha1=alpha, a2=0.0, a3=0.0)
    e, norm = rayleigh_quotient(p, Geometry(r, 1.1), FieldConfig(0.0, 1.1))
    ref = heitler_london_terms(alpha, r)
    assert e == pytest.approx(ref["energy"], rel=1e-6)
    assert norm == pytest.approx(ref["norm"], rel=1e-6)


def test_dissociation_limit():
    p = TrialParameters(alpha2=1.0, a1=0.0, a2=1.0, a3=0.0)
    e, _ = rayleigh_quotient(p, Geometry(50.0), FieldConfig())
    assert e == pytest.approx(-0.5, abs=1e-4)


def test_gauge_term_vanishes_for_real_functions():
    g, f = Geometry(2.0, 0.6), FieldConfig(0.5, 0.6)
    e, _ = rayleigh_quotient(GENERIC, g, f)
    assert gauge_linear_term(GENERIC, g, f) < el.DEFAULT_REL_TOL * abs(e)


def test_analytic_gradient_matches_finite_differences():
    g, f = Geometry(2.1, 0.5), FieldConfig(0.3, 0.5)
    prob = el._Problem(g, f, SpheroidalRule(1, 30.0))
    x = GENERIC.nonlinear_vector()
    _, grad, _ = prob.energy_and_gradient(x)
    h = 1e-5
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fd = (prob.energy_and_gradient(xp)[0] - prob.energy_and_gradient(xm)[0]) / (2 * h)
        assert grad[i] == pytest.approx(fd, abs=2e-7), el.NONLINEAR[i]


def test_zero_field_isotropy():
    e = [optimize_energy(Geometry(2.0, t), FieldConfig(0.0, t), restarts=0).energy for t in (0.0, 0.5, 1.5)]
    assert max(e) - min(e) < 1e-9


def test_variational_window_at_r2():
    e = optimize_energy(Geometry(2.0), FieldConfig(), restarts=3).energy
    assert -0.6027 <= e <= -0.6024


@pytest.mark.slow
@pytest.mark.parametrize("r,theta,b,ref,tol", [
    (1.9971, 45, 0.0, -0.602625, 2e-4),
    (1.9786, 0, 0.2, -0.596311, 3e-4),
    (1.6348, 90, 1.0, -0.449532, 5e-4),
])
def test_optimize_examples(r, theta, b, ref, tol):
    t = math.radians(theta)
    pt = optimize_energy(Geometry(r, t), FieldConfig(b, t), restarts=3)
    assert pt.converged
    assert abs(pt.energy - ref) <= tol
    assert 0.0 <= pt.params.xi <= 1.0


def test_parallel_symmetry_enforced():
    pt = optimize_energy(Geometry(2.0, 0.0), FieldConfig(0.2, 0.0), GENERIC, restarts=1)
    p = pt.params
    assert np.array_equal(p.beta_x, p.beta_y)


def test_budget_exhaustion_flagged():
    pt = optimize_energy(Geometry(2.0, 0.3), FieldConfig(0.2, 0.3), GENERIC, budget=4, restarts=0)
    assert not pt.converged
    assert math.isfinite(pt.energy)


# -- equilibria and curves -----------------------------------------------------

@pytest.mark.slow
def test_equilibrium_examples(table1_equilibria):
    for key in ((0.1, 0), (0.2, 90)):
        eq = table1_equilibria[key]
        r_ref, e_ref = TABLE1[key]
        assert abs(eq.r_eq - r_ref) <= 1e-2
        assert abs(eq.e_eq - e_ref) <= 5e-4


@pytest.mark.slow
def test_equilibrium_b06_theta45():
    eq = find_equilibrium(math.radians(45), 0.6, (1.5, 2.1))
    r_ref, e_ref = TABLE1[0.6, 45]
    assert abs(eq.r_eq - r_ref) <= 1e-2
    assert abs(eq.e_eq - e_ref) <= 5e-4


@pytest.mark.slow
def test_theta_monotonicity(table1_equilibria):
    for b in (0.1, 0.2):
        e = [table1_equilibria[b, t].e_eq for t in (0, 45, 90)]
        assert e[0] < e[1] < e[2]


@pytest.mark.slow
def test_r_eq_shrinks_with_field(zero_field_eq, table1_equilibria):
    assert table1_equilibria[0.2, 0].r_eq < table1_equilibria[0.1, 0].r_eq < zero_field_eq.r_eq


def test_no_interior_minimum_names_bracket():
    with pytest.raises(OptimizationError, match=r"\[2.6, 3.0\]"):
        find_equilibrium(0.0, 0.0, (2.6, 3.0), xatol=1e-3, restarts=0)
    with pytest.raises(ValueError):
        find_equilibrium(0.0, 0.0, (2.0, 1.0))


@pytest.mark.slow
def test_scan_minimum_near_reference():
    rs = np.round(np.arange(1.90, 2.061, 0.01), 4)
    pts = scan_curve(0.0, 0.2, rs)
    e = np.array([p.energy for p in pts])
    assert all(p.converged for p in pts)
    assert abs(rs[int(np.argmin(e))] - 1.9786) <= 0.01


def test_scan_zero_field_isotropy():
    rs = [1.6, 2.0, 2.6]
    a = [p.energy for p in scan_curve(0.0, 0.0, rs, restarts=0)]
    b = [p.energy for p in scan_curve(1.2, 0.0, rs, restarts=0)]
    assert np.max(np.abs(np.subtract(a, b))) < 1e-9


def test_scan_flags_failures_without_aborting(monkeypatch):
    real = el.optimize_energy

    def flaky(geometry, *a, **kw):
        if abs(geometry.r - 2.0) < 1e-12:
            raise QuadratureError("forced", achieved=1e-3)
        return real(geometry, *a, **kw)

    monkeypatch.setattr(el, "optimize_energy", flaky)
    pts = scan_curve(0.0, 0.0, [1.8, 2.0, 2.2], restarts=0, backward=False)
    assert [p.converged for p in pts] == [True, False, True]
    assert math.isnan(pts[1].energy) and "forced" in pts[1].message
    with pytest.raises(ValueError):
        scan_curve(0.0, 0.0, [2.0, 1.9])


@pytest.mark.slow
def test_large_r_tail_has_maximum_near_45_degrees():
    # E(theta) at R = 10, B = 0.2 should peak near 45 degrees
    e = {}
    for th in (0, 45, 90):
        t = math.radians(th)
        e[th] = optimize_energy(Geometry(10.0, t), FieldConfig(0.2, t), restarts=6).energy
    assert e[45] > e[0] and e[45] > e[90], e


def test_energy_point_records_nuclear_repulsion():
    pt = optimize_energy(Geometry(3.0), FieldConfig(), restarts=0)
    assert isinstance(pt, EnergyPoint)
    # electronic part alone would lie below -0.6 at R = 3
    assert pt.energy == pytest.approx(-0.5776, abs=2e-3)
