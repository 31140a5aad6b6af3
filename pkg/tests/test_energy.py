import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gldeg.energy import (EnergyParams, I0, L_eps, L_eps_chart, M_lambda_chart, energy_GL, gauss_panels,
                          gl_gradient, gl_hessian, residual_GL, splitting_identity_check, vortex_detect)
from gldeg.errors import PreconditionError
from gldeg.fields import ComplexField, ScalarField
from gldeg.radial import annulus_profile, disk_profile


def test_energy_of_constant_is_zero(two_holes):
    e = energy_GL(ComplexField(two_holes, np.ones(two_holes.n_vertices, complex)), 0.1)
    assert e.total < 1e-25


def test_energy_of_unimodular_is_dirichlet(annulus_fine):
    e = energy_GL(ComplexField(annulus_fine, annulus_fine.z / np.abs(annulus_fine.z)), 0.1)
    # the P1 interpolant dips below modulus one between vertices
    assert 0 < e.potential < 1e-3
    exact = np.pi * np.log(10 / 3)
    assert exact < e.dirichlet < 1.005 * exact


def test_gradient_matches_finite_differences(annulus, rng):
    u = annulus.z * (1 + 0.1 * rng.normal(size=annulus.n_vertices))
    eps, h = 0.2, 1e-6
    g = gl_gradient(u, annulus, eps)
    for j in rng.choice(annulus.n_vertices, 5, replace=False):
        for unit, part in ((1, g[j].real), (1j, g[j].imag)):
            up, um = u.copy(), u.copy()
            up[j] += h * unit
            um[j] -= h * unit
            fd = (energy_GL(ComplexField(annulus, up), eps).total - energy_GL(ComplexField(annulus, um), eps).total) / (2 * h)
            assert np.isclose(fd, part, rtol=1e-5, atol=1e-7)


def test_hessian_matches_gradient_differences(annulus, rng):
    n = annulus.n_vertices
    u = annulus.z * (1 + 0.1 * rng.normal(size=n))
    eps, h = 0.2, 1e-6
    H = gl_hessian(u, annulus, eps)
    s = rng.normal(size=2 * n)
    ds = s[:n] + 1j * s[n:]
    gp, gm = gl_gradient(u + h * ds, annulus, eps), gl_gradient(u - h * ds, annulus, eps)
    fd = (gp - gm) / (2 * h)
    assert np.allclose(H @ s, np.concatenate([fd.real, fd.imag]), rtol=1e-5, atol=1e-6)
    assert abs(H - H.T).max() < 1e-10


def test_lambda_at_equality():
    assert np.isclose(EnergyParams.lambda_at_equality(0.05, 1.0), 1800.0)
    with pytest.raises(ValueError):
        EnergyParams(0.0)


def test_I0_annulus(annulus_fine):
    assert np.isclose(I0(annulus_fine, (1,)), np.pi * np.log(10 / 3), rtol=2e-3)


def test_radial_solution_residual_decreases():
    from gldeg.geometry import DomainSpec, build_mesh
    eps = 0.25
    prof = disk_profile(1, eps)
    dual = []
    for h in (0.1, 0.05):
        m = build_mesh(DomainSpec.disk(h))
        f, _ = prof(np.abs(m.z))
        r = residual_GL(ComplexField(m, f * np.exp(1j * np.angle(m.z))), eps, dual=True)
        assert r.boundary_modulus < 1e-9
        dual.append(r.interior_dual)
    assert dual[1] < 0.6 * dual[0]


def test_splitting_identity():
    rows = splitting_identity_check(n_fields=5, seed=7)
    assert all(r.passed for r in rows)
    assert min(abs(r.L) for r in rows) > 1e-2      # the check is not vacuous


def test_splitting_identity_fails_for_non_solution(monkeypatch):
    import gldeg.radial as radial
    orig = radial.annulus_profile
    monkeypatch.setattr(radial, "annulus_profile", lambda r, d, e: orig(r, d, 1.2 * e))
    assert not all(r.passed for r in splitting_identity_check(n_fields=3))


def test_mesh_L_eps_approaches_identity(annulus_fine):
    # discrete L_eps of w = 1 is the negative phase term of u = z/|z|
    m = annulus_fine
    w = ComplexField(m, np.ones(m.n_vertices, complex))
    rho = ScalarField(m, np.ones(m.n_vertices))
    ctr = m.centroids
    gt = np.stack([-ctr[:, 1], ctr[:, 0]], axis=1) / np.sum(ctr ** 2, axis=1)[:, None]
    val = L_eps(w, None, rho, gt, 0.1)
    assert np.isclose(val, -np.pi * np.log(10 / 3), rtol=5e-3)


def test_L_eps_requires_unimodular_trace(annulus):
    w = ComplexField(annulus, 0.5 * np.ones(annulus.n_vertices, complex))
    rho = ScalarField(annulus, np.ones(annulus.n_vertices))
    with pytest.raises(PreconditionError):
        L_eps(w, None, rho, np.zeros((annulus.n_triangles, 2)), 0.1)


def test_chart_functionals_vanish_on_identity():
    h, wh = gauss_panels(np.linspace(0.5, 1, 3))
    t, wt = gauss_panels(np.linspace(-0.5, 0.5, 3))
    one = lambda H, T: (np.ones_like(H, complex), np.zeros_like(H, complex), np.zeros_like(H, complex))
    assert abs(M_lambda_chart(one, 10.0, h, wh, t, wt)) < 1e-14
    assert abs(L_eps_chart(one, 0.1, 1, h, wh, t, wt)) < 1e-14


def test_M_lambda_rejects_large_modulus():
    h, wh = gauss_panels([0.5, 1.0])
    t, wt = gauss_panels([-0.5, 0.5])
    big = lambda H, T: (3 * np.ones_like(H, complex), np.zeros_like(H, complex), np.zeros_like(H, complex))
    with pytest.raises(PreconditionError):
        M_lambda_chart(big, 1.0, h, wh, t, wt)


def test_vortex_detect(disk):
    u = ComplexField(disk, (disk.z - 0.2) * np.abs(disk.z - 0.2) ** -0.5)
    v = vortex_detect(u)
    assert len(v) == 1 and v[0].winding == 1
    assert np.hypot(v[0].position[0] - 0.2, v[0].position[1]) < 0.1
    assert vortex_detect(ComplexField(disk, np.ones(disk.n_vertices, complex))) == []
