import numpy as np
import pytest

from gldeg.elliptic import (dirichlet_energy, dirichlet_solve, harmonic_conjugate, harmonic_extension, loop_flux,
                            solve_all_V, solve_h0, stiffness)
from gldeg.fields import ComplexField


def test_stiffness_annihilates_constants(annulus):
    K = stiffness(annulus)
    assert np.allclose(K @ np.ones(annulus.n_vertices), 0, atol=1e-12)
    assert abs(K - K.T).max() < 1e-14


def test_dirichlet_solve_reproduces_linear(two_holes):
    f = 0.3 + 2 * two_holes.vertices[:, 0] - two_holes.vertices[:, 1]
    bm = two_holes.boundary_mask
    u = dirichlet_solve(two_holes, np.where(bm, f, 0.0))
    assert np.allclose(u, f, atol=1e-9)


def test_V_annulus_matches_log(annulus_fine):
    (V,) = solve_all_V(annulus_fine)
    r = np.abs(annulus_fine.z)
    exact = 1 - np.log(r) / np.log(0.3)     # 0 on the hole, 1 outside
    assert np.max(np.abs(V.values - exact)) < 5e-3


def test_V_boundary_values(two_holes):
    V = solve_all_V(two_holes)
    for i, Vi in enumerate(V, 1):
        for k, loop in enumerate(two_holes.boundary_loops):
            assert np.allclose(Vi.values[loop], 0.0 if k == i else 1.0)


@pytest.mark.parametrize("d", [1, 2])
def test_h0_annulus(annulus_fine, d):
    h0, c = solve_h0(annulus_fine, (d,))
    assert np.isclose(loop_flux(annulus_fine, h0.values, 1), 2 * np.pi * d)
    exact = 1 + d * np.log(np.abs(annulus_fine.z))
    assert np.max(np.abs(h0.values - exact)) < 5e-3 * d
    assert np.isclose(dirichlet_energy(annulus_fine, h0.values), np.pi * d * d * np.log(10 / 3), rtol=2e-3)


def test_conjugate_of_unimodular_map(annulus_fine):
    u = ComplexField(annulus_fine, annulus_fine.z / np.abs(annulus_fine.z))
    h, c = harmonic_conjugate(u)
    exact = 1 + np.log(np.abs(annulus_fine.z))
    assert np.max(np.abs(h.values - exact)) < 2e-2
    assert np.allclose(h.values[annulus_fine.boundary_loops[0]], 1)


def test_harmonic_extension_minimizes(disk, rng):
    tr = np.exp(1j * 2 * np.angle(disk.z))
    ext = harmonic_extension(disk, tr)
    e0 = dirichlet_energy(disk, ext.values)
    pert = ext.values.copy()
    pert[disk.interior] += 0.01 * rng.normal(size=disk.interior.sum() if disk.interior.dtype == bool
                                             else len(disk.interior))
    assert dirichlet_energy(disk, pert) > e0
