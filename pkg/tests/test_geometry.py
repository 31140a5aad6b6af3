import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gldeg.errors import GeometryError, ResolutionError
from gldeg.geometry import (AnnulusChart, Circle, DomainSpec, Refinement, annulus_exact_chart, build_mesh,
                            export_mesh_text, polygon_area)


def test_annulus_topology(annulus):
    assert len(annulus.boundary_loops) == 2
    assert annulus.euler_characteristic() == 0
    assert annulus.min_angle_deg() >= 20


def test_disk_and_two_holes_topology(disk, two_holes):
    assert disk.euler_characteristic() == 1 and len(disk.boundary_loops) == 1
    assert two_holes.euler_characteristic() == -1 and len(two_holes.boundary_loops) == 3


def test_area_converges_to_exact(annulus_fine):
    exact = np.pi * (1 - 0.09)
    assert abs(annulus_fine.areas.sum() - exact) / exact < 2e-3
    assert np.all(annulus_fine.areas > 0)


def test_loop_orientation(two_holes):
    # every loop counterclockwise, so (z - c)/|z - c| has degree +1 on it
    areas = [polygon_area(two_holes.vertices[l]) for l in two_holes.boundary_loops]
    assert all(a > 0 for a in areas)


def test_boundary_vertices_on_circles(two_holes):
    for k, loop in enumerate(two_holes.boundary_loops):
        c = two_holes.spec.circles[k]
        r = np.linalg.norm(two_holes.vertices[loop] - c.c, axis=1)
        assert np.allclose(r, c.radius, atol=1e-12)


def test_deterministic_for_seed():
    spec = DomainSpec.annulus(0.3, 0.12)
    a, b = build_mesh(spec, seed=3), build_mesh(spec, seed=3)
    assert export_mesh_text(a) == export_mesh_text(b)


def test_refinement_honoured():
    spec = DomainSpec.annulus(0.3, 0.1, refine=[Refinement((1.0, 0.0), 2e-3, 0.2)])
    m = build_mesh(spec)
    near = np.linalg.norm(m.vertices - [1.0, 0.0], axis=1) < 5e-3
    assert near.sum() >= 5 and m.min_angle_deg() >= 20


def test_invalid_domains():
    with pytest.raises(GeometryError):
        DomainSpec(Circle((0, 0), 1), (Circle((0.9, 0), 0.2),), 0.05).validate()
    with pytest.raises(GeometryError):
        DomainSpec(Circle((0, 0), 1), (Circle((-0.2, 0), 0.2), Circle((0.1, 0), 0.2)), 0.05).validate()
    with pytest.raises(ResolutionError):
        DomainSpec(Circle((0, 0), 1), (Circle((0, 0), 0.01),), 0.05).validate()


@given(st.floats(0.1, 0.7), st.floats(0.02, 0.2),
       st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(1e-3, 0.02)), max_size=3))
def test_json_roundtrip(r, h, refs):
    spec = DomainSpec.annulus(r, h, [Refinement((x, y), min(hr, h), 0.2) for x, y, hr in refs])
    assert DomainSpec.from_json(spec.to_json()) == spec


@settings(deadline=None, max_examples=20)
@given(st.floats(0.25, 0.95), st.floats(-np.pi, np.pi), st.integers(1, 3))
def test_exact_chart(rad, ang, d):
    z = rad * np.exp(1j * ang)
    cv = annulus_exact_chart(AnnulusChart(0.2, d), (z.real, z.imag))
    assert np.isclose(np.asarray(cv.h), 1 + d * np.log(rad))
    assert np.isclose(np.linalg.norm(cv.grad_theta), d / rad)
