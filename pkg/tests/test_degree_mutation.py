import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gldeg.degree_mutation import (F, Psi, TestFnParams, assemble_psi, bump, bump_degree, build_M_eta_delta,
                                   c_closed, clamp, concentration_scale, disk_series, disk_trace, fourier_b,
                                   make_pocket, mobius_sequence, mutate_degrees, pocket_refinements, profiles,
                                   spectral_energy, verify_testfn)
from gldeg.errors import ConstructionError, ParameterError, ResolutionError, TruncationError
from gldeg.fields import ComplexField, loop_degrees, winding_number
from gldeg.geometry import AnnulusChart, DomainSpec, build_mesh

TH = 2 * np.pi * np.arange(4096) / 4096


@given(st.floats(0.05, 1.5), st.floats(-10, 10))
def test_bump_support_and_range(delta, th):
    v = bump(th, delta)
    x = abs(np.angle(np.exp(1j * th)))
    assert 0 <= v <= 1
    if x <= delta / 2:
        assert v == 1
    if x >= delta:
        assert v == 0


def test_bump_is_C3():
    # the fourth difference quotient stays bounded: third derivative is Lipschitz
    delta, h = 0.5, 1e-3
    x = np.arange(-0.6, 0.6, h)
    d3 = np.diff(bump(x, delta), 3) / h ** 3
    assert np.max(np.abs(np.diff(d3))) < 1e3 * h ** 0 and np.all(np.isfinite(d3))


@given(st.floats(0.01, 0.4), st.floats(0.5, 1.2))
@settings(max_examples=25)
def test_Psi_unimodular_degree(t, delta):
    v = Psi(TH, t, delta)
    assert np.allclose(np.abs(v), 1)
    assert np.isclose(winding_number(v), -1)
    off = np.abs(np.angle(np.exp(1j * TH))) >= delta
    assert np.allclose(v[off], 1)


def test_F_and_mobius_sequence_degree():
    assert np.isclose(winding_number(F(TH, 0.2)), -1)
    z = np.exp(1j * TH)
    for n in (2, 10, 100):
        m = mobius_sequence(z, n)
        assert np.allclose(np.abs(m), 1) and np.isclose(winding_number(m), 1)
    # weakly to 1: away from z = 1 the values approach 1
    assert abs(mobius_sequence(-1.0 + 0j, 1000) - 1) < 1e-2


@pytest.mark.parametrize("t", [0.1, 0.03])
def test_fourier_plateau_hook_matches_closed_form(t):
    fd = fourier_b(TestFnParams(t, 0.5), force_plateau=True)
    assert np.max(np.abs(fd.b - c_closed(fd.ks, t))) < 1e-8


def test_fourier_truncation_error():
    with pytest.raises(TruncationError):
        fourier_b(TestFnParams(0.01, 0.5, K=64))


def test_spectral_energy_matches_disk_series_quadrature():
    fd = fourier_b(TestFnParams(0.1, 0.5))
    # energy of the harmonic extension via boundary integral: 1/2 int u conj(d_r u)
    th = 2 * np.pi * np.arange(8192) / 8192
    r, h = 1 - 1e-5, 1e-6
    u = disk_series(fd, r * np.exp(1j * th))
    ur = (disk_series(fd, (r + h) * np.exp(1j * th)) - disk_series(fd, (r - h) * np.exp(1j * th))) / (2 * h)
    e = 0.5 * np.real(np.sum(np.conj(u) * ur)) * r * 2 * np.pi / len(th)
    assert np.isclose(e, spectral_energy(fd), rtol=1e-3)


def test_M_lambda_routes_agree():
    tf = assemble_psi(TestFnParams(0.1, 0.5), lam=10.0)
    a = tf.M_lambda_coefficients(10.0)["total"]
    b = tf.M_lambda_quadrature(10.0)
    assert np.isclose(a, b, rtol=1e-10)


def test_verify_testfn_degrees_and_chain():
    r = verify_testfn(AnnulusChart(0.3, 1), TestFnParams(0.1, 0.5), eps=0.5)
    assert r.lam == pytest.approx(18.0)
    assert (r.deg_outer_psi, r.deg_outer_shift, r.deg_hole_shift) == (-1, -1, 0)
    assert r.chain_ok and r.max_modulus <= 2 + 1e-9 or r.M_lambda_clamped <= r.M_lambda_quadrature


def test_verify_testfn_rejects_small_lambda():
    with pytest.raises(ParameterError):
        verify_testfn(AnnulusChart(0.3, 1), TestFnParams(0.1, 0.5), eps=0.05, lam=10.0)


@given(st.complex_numbers(max_magnitude=10))
def test_clamp(w):
    c = clamp(np.array([w]))[0]
    assert abs(c) <= 2 + 1e-12
    if abs(w) <= 2:
        assert c == w
    elif abs(w) > 0:
        assert np.isclose(np.angle(c), np.angle(w))


def test_profiles_boundary_values():
    P = profiles(10.0, 0.4, 20)
    f, fp = P.f([0, 3, -7], np.array([0.6, 1.0]))
    assert np.allclose(f[:, 0], 0) and np.allclose(f[:, 1], 1)


def test_M_eta_delta_properties():
    M = build_M_eta_delta(0.05, 0.5)
    assert M.energy <= np.pi + 0.05
    tr = disk_trace(TH, M.t, 0.5)
    assert np.isclose(winding_number(tr), 1)
    z = 0.999 * np.exp(1j * TH)
    assert np.max(np.abs(M(z) - tr)) < 0.05
    with pytest.raises(ParameterError):
        build_M_eta_delta(0.05, 1.5)


@pytest.mark.parametrize("loop,angle", [(0, 0.0), (0, 2.0), (1, 1.0)])
def test_pocket_map(loop, angle):
    spec = DomainSpec.annulus(0.3, 0.05)
    pk = make_pocket(spec, loop, angle, 0.01)
    assert pk.area <= 0.01 * (1 + 1e-9)
    # boundary arc to the unit circle, pocket interior to the open disk
    c = pk.circle_c
    half = 0.5 * np.arcsin(pk.s / (2 * pk.circle_r))
    arc = c + pk.circle_r * np.exp(1j * (angle + np.linspace(-half, half, 9)))
    assert np.allclose(np.abs(pk.to_disk(arc)), 1, atol=1e-9)
    inward = (c - pk.x0) / abs(c - pk.x0) * (1 if loop == 0 else -1)
    inner = pk.x0 + 0.3 * pk.s * inward
    assert pk.contains(np.array([inner]))[0] and abs(pk.to_disk(inner)) < 1
    assert abs(pk.to_disk(pk.x0) - 1) < 1e-9
    assert concentration_scale(pk, 0.05) < pk.s


def test_pocket_clearance():
    spec = DomainSpec.annulus(0.8, 0.05)          # gap 0.2 to the outer circle
    with pytest.raises(ConstructionError):
        make_pocket(spec, 1, 0.0, 0.05)


@pytest.fixture(scope="module")
def bump_mesh():
    base = DomainSpec.annulus(0.3, 0.1)
    return build_mesh(DomainSpec.annulus(0.3, 0.1, refine=pocket_refinements(base, [(0, 0.0)], 0.2)))


@pytest.mark.parametrize("sign", [1, -1])
def test_bump_degree_cost(bump_mesh, sign):
    m = bump_mesh
    u = ComplexField(m, m.z / np.abs(m.z))
    r = bump_degree(u, 0, sign, 0.2, 0.05)
    assert r.degrees_after[0] - r.degrees_before[0] == sign
    assert r.degrees_after[1] == r.degrees_before[1]
    assert r.extra_energy <= np.pi + 0.2
    assert np.allclose(np.abs(r.field.values[m.boundary_mask]), 1)


def test_bump_degree_needs_resolution(annulus):
    with pytest.raises(ResolutionError):
        bump_degree(ComplexField(annulus, np.ones(annulus.n_vertices, complex)), 0, 1, 0.05, 0.05)


def test_mutate_zero_shift_is_identity(annulus):
    u = ComplexField(annulus, annulus.z / np.abs(annulus.z))
    r = mutate_degrees(u, (0, 0), 0.1, 0.05)
    assert r.field is u and r.extra_energy == 0


def test_mutate_shift_count(annulus):
    with pytest.raises(ParameterError):
        mutate_degrees(ComplexField(annulus, annulus.z), (1,), 0.1, 0.05)


def test_testfn_below_pi_at_unit_lambda():
    # the construction lowers the degree at cost below pi once the lambda
    # penalty is small; the margin is at least delta t
    for t in (0.05, 0.02):
        r = verify_testfn(AnnulusChart(0.3, 1), TestFnParams(t, 0.5), eps=2.2, lam=1.0)
        assert r.M_lambda < np.pi and r.pi_margin >= 0.5 * t
        assert r.M_lambda <= r.bound + 0.2
