import math

import numpy as np
import pytest

from conftest import TABLE2
from h2field import magnetics as mg
from h2field.core import FieldConfig
from h2field.electronic import Geometry


@pytest.fixture(scope="module")
def zero_field_state():
    """Optimized zero-field wavefunction at R = 1.9971."""
    r, params, _ = mg.zero_field_moments([], r=1.9971)
    return r, params


def _moments(state, theta_deg):
    r, params = state
    t = math.radians(theta_deg)
    return mg.position_moments(params, Geometry(r, t), FieldConfig(0.0, t))


def test_parallel_moments(zero_field_state):
    m = _moments(zero_field_state, 0)
    assert m.x2 == pytest.approx(m.y2, rel=1e-10)
    assert abs(m.xz) < 1e-10
    assert m.x2 == pytest.approx(TABLE2[0][0], abs=2e-3)
    assert m.z2 == pytest.approx(TABLE2[0][2], abs=2e-3)


def test_rotated_moments(zero_field_state):
    m45 = _moments(zero_field_state, 45)
    assert m45.x2 == pytest.approx(m45.z2, rel=1e-9)
    assert m45.x2 == pytest.approx(0.87583, abs=2e-3)
    y2 = [_moments(zero_field_state, t).y2 for t in (0, 30, 60, 90)]
    assert np.ptp(y2) < 1e-9
    assert y2[0] == pytest.approx(0.6404, abs=2e-3)


def test_diamagnetic_formula():
    assert mg.diamagnetic_chi(0.0, 0.64036, 1.11131) == pytest.approx(-0.32018, abs=1e-5)
    assert mg.diamagnetic_chi(math.pi / 2, 0.64036, 1.11131) == pytest.approx(-0.43792, abs=1e-5)
    for t in (0.1, 0.7, 1.3):
        assert mg.diamagnetic_chi(t, 0.9, 0.9) == pytest.approx(-0.45, rel=1e-14)
    with pytest.raises(ValueError):
        mg.diamagnetic_chi(0.0, -1.0, 1.0)


def test_fit_recovers_synthetic_coefficients():
    rng = np.random.default_rng(3)
    coef = np.array([-0.43, 0.01, 0.4, 0.11, -0.004, -0.17])
    b = rng.uniform(0, 0.2, 60)
    t = rng.uniform(0, math.pi / 2, 60)
    x = [float(np.dot(mg._x_basis(bi, ti), coef)) for bi, ti in zip(b, t)]
    fit = mg.fit_x_surface(b, t, x)
    assert np.allclose(fit.coefficients, coef, atol=1e-12)
    assert fit.rms < 1e-14
    assert fit.evaluate(0.1, 0.3) == pytest.approx(float(np.dot(mg._x_basis(0.1, 0.3), coef)))


def test_rank_deficient_fit_rejected():
    with pytest.raises(ValueError, match="rank deficient"):
        mg.fit_x_surface([0.0, 0.1, 0.2] * 3, [0.3] * 9, np.zeros(9))


def test_even_quartic_fit_and_conditioning():
    b = np.array(mg.CHI_B_SAMPLES)
    fit = mg.fit_even_quartic(b, -0.6 + 0.16 * b**2 - 2.0 * b**4)
    assert fit.chi == pytest.approx(-0.32, rel=1e-10)
    assert fit.predict(0.025) == pytest.approx(-0.6 + 0.16 * 0.025**2 - 2.0 * 0.025**4, abs=1e-14)
    with pytest.raises(ValueError, match="ill-conditioned"):
        mg.fit_even_quartic([0.0, 0.0, 0.0, 0.04, 0.04], np.zeros(5))


def test_total_chi_validates_samples():
    with pytest.raises(ValueError):
        mg.total_chi(0.0, (0.01, 0.02, 0.03, 0.04, 0.05))
    with pytest.raises(ValueError):
        mg.total_chi(0.0, (0.0, 0.01, 0.02, 0.03))


def test_paramagnetic_by_construction():
    rec = mg.SusceptibilityRecord(0.3, 0.7, 0.64, 1.0, -0.33, -0.32)
    assert rec.chi_p == pytest.approx(0.01, abs=1e-15)
    assert mg.paramagnetic_chi(rec) == rec.chi_p
    assert set(rec.row()) == set(mg.TABLE_COLUMNS)


# -- computed susceptibilities (session branches) --------------------------------

@pytest.fixture(scope="module")
def records(field_branches):
    thetas = [math.radians(t) for t in TABLE2]
    return mg.susceptibility_table(thetas, {math.radians(t): field_branches[t] for t in TABLE2},
                                   r=1.9971)


@pytest.mark.slow
def test_total_chi_examples(field_branches):
    for th, ref in ((0, -0.32018), (90, -0.40345)):
        chi, fit = mg.total_chi(math.radians(th), branch=field_branches[th])
        assert chi == pytest.approx(ref, abs=5e-3)
        assert fit.condition < mg.MAX_FIT_CONDITION


@pytest.mark.slow
def test_paramagnetic_examples(records):
    chi_p = {round(math.degrees(r.theta)): r.chi_p for r in records}
    for th in (0, 45, 90):
        assert chi_p[th] == pytest.approx(TABLE2[th][4], abs=5e-3)


@pytest.mark.slow
def test_susceptibility_invariants(records):
    chi_d = np.array([r.chi_d for r in records])
    chi_p = np.array([r.chi_p for r in records])
    assert np.all(chi_d < 0)
    assert np.all(np.diff(np.abs(chi_d)) >= 0)
    assert np.all(np.diff(chi_p) >= 0)
    assert np.all(chi_p < np.abs(chi_d))


@pytest.mark.slow
def test_x_limit_matches_chi_d(records, field_branches):
    for rec in records:
        x0 = field_branches[round(math.degrees(rec.theta))][0]
        assert x0.b == 0.0 and x0.b_eval == mg.ZERO_FIELD_LIMIT
        assert x0.x == pytest.approx(rec.chi_d, abs=2e-3)
    assert field_branches[0][0].x == pytest.approx(-0.32018, abs=2e-3)


@pytest.mark.slow
def test_x_at_b02_perpendicular(field_branches):
    p = field_branches[90][-1]
    assert p.b == pytest.approx(0.2)
    model = -0.43795 + 0.013498 * 0.2 + 0.37103 * 0.04
    assert p.x == pytest.approx(model, abs=1.6e-4 + 1e-4)


@pytest.mark.slow
def test_chi_d_both_ways(records, field_branches):
    direct = mg.fit_chi_d([r.theta for r in records], [r.chi_d for r in records])
    pts = [p for br in field_branches.values() for p in br]
    xfit = mg.fit_x_surface([p.b for p in pts], [p.theta for p in pts], [p.x for p in pts])
    assert direct.rms < 1e-10
    assert direct.coefficients[0] == pytest.approx(xfit.coefficients[0], abs=2e-3)
    assert direct.coefficients[1] == pytest.approx(xfit.coefficients[3], abs=2e-3)


@pytest.mark.slow
def test_perturbative_window_perpendicular(field_branches):
    br = field_branches[90]
    chi, fit = mg.total_chi(math.pi / 2, branch=br)
    e = {round(p.b, 2): p.energy for p in br}
    assert abs(e[0.0] - 0.5 * chi * 0.04**2 - e[0.04]) <= 1e-4


def test_table_csv(tmp_path):
    recs = [mg.SusceptibilityRecord(0.0, 0.64, 0.64, 1.11, -0.32, -0.32)]
    path = tmp_path / "t.csv"
    mg.write_table_csv(recs, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(mg.TABLE_COLUMNS)
    assert lines[1].startswith("0.0000,0.6400000000")
