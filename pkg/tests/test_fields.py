import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gldeg.elliptic import solve_all_V
from gldeg.errors import DegeneracyError, TopologyError
from gldeg.fields import (ComplexField, DegreeSpec, abdeg, ae_distance, degree, lift_phase, loop_degrees,
                          winding_number)


@given(st.integers(-6, 6), st.integers(16, 200))
def test_winding_number_of_sampled_power(d, n):
    if n <= 2 * abs(d):
        return
    th = 2 * np.pi * np.arange(n) / n
    assert np.isclose(winding_number(np.exp(1j * d * th)), d)


@pytest.mark.parametrize("d", [-2, 0, 1, 3])
def test_loop_degrees_annulus(annulus, d):
    u = ComplexField(annulus, (annulus.z / np.abs(annulus.z)) ** d)
    assert loop_degrees(u) == (d, d)


def test_two_hole_degrees(two_holes):
    z = two_holes.z
    u = ComplexField(two_holes, (z + 0.4) / np.abs(z + 0.4))
    assert loop_degrees(u) == (1, 1, 0)


def test_degree_needs_modulus(annulus):
    v = annulus.z / np.abs(annulus.z)
    v[annulus.boundary_loops[0][0]] = 1e-3
    with pytest.raises(DegeneracyError):
        degree(ComplexField(annulus, v), 0)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_abdeg_close_to_degree(annulus_fine, d):
    V = solve_all_V(annulus_fine)
    u = ComplexField(annulus_fine, (annulus_fine.z / np.abs(annulus_fine.z)) ** d)
    assert abs(abdeg(u, V)[0] - d) < 0.05


def test_abdeg_is_l2_continuous(annulus, rng):
    V = solve_all_V(annulus)
    u = annulus.z / np.abs(annulus.z)
    a0 = abdeg(ComplexField(annulus, u), V)[0]
    for s in (1e-2, 1e-3, 1e-4):
        bump = s * np.exp(-20 * np.abs(annulus.z - 0.6) ** 2)
        a1 = abdeg(ComplexField(annulus, u * (1 + bump)), V)[0]
        assert abs(a1 - a0) < 10 * s


def test_abdeg_constant_is_zero(two_holes):
    V = solve_all_V(two_holes)
    assert np.allclose(abdeg(ComplexField(two_holes, np.ones(two_holes.n_vertices, complex)), V), 0)


def test_degree_spec_class():
    assert DegreeSpec((1,), 1, (1,), (1.2,)).in_class()
    assert not DegreeSpec((1,), 1, (1,), (1.4,)).in_class()


ints = st.lists(st.integers(-5, 5), min_size=2, max_size=2)


@given(ints, st.integers(-5, 5), ints, st.integers(-5, 5), ints, st.integers(-5, 5))
def test_ae_distance_metric(a, qa, b, qb, c, qc):
    A, B, C = (a, qa), (b, qb), (c, qc)
    assert ae_distance(A, B) == ae_distance(B, A) >= 0
    assert ae_distance(A, A) == 0
    assert ae_distance(A, C) <= ae_distance(A, B) + ae_distance(B, C)


def test_lift_phase_matches_angle(annulus):
    u = ComplexField(annulus, annulus.z / np.abs(annulus.z))
    ctr = annulus.centroids
    region = (ctr[:, 1] > 0.05) & (ctr[:, 0] > 0)
    anchor = int(annulus.triangles[region][0, 0])
    th = lift_phase(u, region, anchor).values
    v = np.unique(annulus.triangles[region])
    assert np.allclose(np.exp(1j * th[v]), u.values[v])
    assert np.all(np.isnan(np.delete(th, v)))


def test_lift_phase_rejects_annulus(annulus):
    u = ComplexField(annulus, annulus.z / np.abs(annulus.z))
    with pytest.raises(TopologyError):
        lift_phase(u, np.ones(annulus.n_triangles, bool), 0)
