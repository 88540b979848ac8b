import math

import pytest
from hypothesis import given, strategies as st

from h2field.core import (CONSTANTS, FieldConfig, GridSpec, NuclearSpecies, canonical_theta,
                          field_from_si, field_to_si, parse_range, species_masses,
                          well_clustered_grid)


def test_field_unit_examples():
    assert field_to_si(0.2) == pytest.approx(4.7e4, rel=1e-15)
    assert field_to_si(0.0) == 0.0
    assert field_to_si(1.0) == 2.35e5
    assert CONSTANTS.B0_tesla == 2.35e5
    assert CONSTANTS.bohr == CONSTANTS.hartree == CONSTANTS.electron_mass == 1.0


@pytest.mark.parametrize("bad", [-0.1, math.nan, math.inf])
def test_field_to_si_rejects_invalid(bad):
    with pytest.raises(ValueError):
        field_to_si(bad)


@given(st.floats(min_value=0.0, max_value=1e3, allow_nan=False))
def test_si_round_trip(b):
    assert field_from_si(field_to_si(b)) == pytest.approx(b, rel=1e-15, abs=0.0)


def test_species_masses():
    assert species_masses("H2+")[1] == pytest.approx(3672.30534686, abs=1e-8)
    assert species_masses("D2+")[1] == pytest.approx(7340.96593576, abs=1e-8)
    h, d = NuclearSpecies.from_name("H2+"), NuclearSpecies.from_name("d2+")
    assert h.fermionic and not d.fermionic
    assert d.statistics == "bosonic"
    with pytest.raises(ValueError, match="unknown species"):
        species_masses("He2+")


def test_mass_override():
    sp = NuclearSpecies.from_name("H2+", nuclear_mass=1836.0)
    assert sp.total_mass == 3672.0
    with pytest.raises(ValueError):
        NuclearSpecies.from_name("H2+", nuclear_mass=-1.0)


def test_field_config_validation():
    with pytest.raises(ValueError):
        FieldConfig(-0.1, 0.0)
    with pytest.raises(ValueError):
        FieldConfig(0.1, math.nan)


@given(st.floats(min_value=-20, max_value=20, allow_nan=False))
def test_canonical_theta_range(theta):
    t = canonical_theta(theta)
    assert 0.0 <= t <= math.pi / 2 + 1e-12
    # the map is invariant under the two symmetries
    assert canonical_theta(-theta) == pytest.approx(t, abs=1e-12)
    assert canonical_theta(math.pi - theta) == pytest.approx(t, abs=1e-9)


def test_grid_spec_validation():
    g = GridSpec(1.0, 3.0, 5, (0.0, 0.5))
    assert g.r_values() == pytest.approx([1.0, 1.5, 2.0, 2.5, 3.0])
    for kw in ({"r_min": 0.0}, {"r_max": 0.5}, {"n_r": 1}):
        args = {"r_min": 1.0, "r_max": 3.0, "n_r": 5} | kw
        with pytest.raises(ValueError):
            GridSpec(**args)
    with pytest.raises(ValueError):
        GridSpec(1.0, 3.0, 5, (0.5, 0.2))
    with pytest.raises(ValueError):
        GridSpec(1.0, 3.0, 5, (0.0, 2.0))


def test_well_grid_clusters_near_center():
    pts = well_clustered_grid(0.4, 12.0, 40)
    assert pts[0] == 0.4 and pts[-1] == 12.0
    steps = [b - a for a, b in zip(pts, pts[1:])]
    assert all(s > 0 for s in steps)
    near = min(range(len(pts)), key=lambda i: abs(pts[i] - 2.0))
    assert steps[near] < steps[-1] / 3


def test_parse_range():
    assert parse_range("0:0.2:0.05") == pytest.approx([0.0, 0.05, 0.1, 0.15, 0.2])
    assert parse_range("0,45,90") == [0.0, 45.0, 90.0]
    assert parse_range("1.5") == [1.5]
    with pytest.raises(ValueError):
        parse_range("1:0:0.1")
