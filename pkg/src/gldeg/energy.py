"""Ginzburg-Landau energy, its splitting functional, the chart functional
M_lambda, Euler-Lagrange residuals and vortex detection."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numpy.polynomial.legendre import leggauss

from .elliptic import dirichlet_energy, solve_h0, stiffness
from .errors import PreconditionError
from .fields import ComplexField, ScalarField, tri_gradient
from .geometry import Mesh

# 3-point rule, barycentric coordinates (2/3, 1/6, 1/6) and permutations, weights 1/3
QUAD_BARY = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
QUAD_W = np.full(3, 1 / 3)


@dataclass(frozen=True)
class EnergyParams:
    eps: float
    lam: float = 0.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @staticmethod
    def lambda_at_equality(eps: float, inf_grad_theta_sq: float) -> float:
        return 9.0 / (2 * eps ** 2 * inf_grad_theta_sq)


@dataclass(frozen=True)
class EnergyReport:
    dirichlet: float
    potential: float
    total: float
    tag: str = "D"
    eps: float = float("nan")

    def csv_row(self) -> str:
        return f"{self.tag},{self.dirichlet:.12e},{self.potential:.12e},{self.total:.12e},{self.eps:.6g}"


def _tri_mask(mesh: Mesh, region) -> np.ndarray:
    if region is None:
        return np.ones(mesh.n_triangles, dtype=bool)
    r = np.asarray(region)
    if r.dtype == bool:
        return r
    m = np.zeros(mesh.n_triangles, dtype=bool)
    m[r] = True
    return m


def quad_values(mesh: Mesh, values: np.ndarray, mask=None) -> np.ndarray:
    """Field at the three quadrature points of each (selected) triangle."""
    tri = mesh.triangles if mask is None else mesh.triangles[mask]
    return values[tri] @ QUAD_BARY.T


def energy_GL(u: ComplexField, eps: float, region=None, tag: str = "D") -> EnergyReport:
    mesh = u.mesh
    m = _tri_mask(mesh, region)
    g = tri_gradient(mesh, u.values)[m]
    dir_ = 0.5 * np.sum(mesh.areas[m] * np.sum(np.abs(g) ** 2, axis=1))
    uq = quad_values(mesh, u.values, m)
    pot = np.sum(mesh.areas[m] * ((1 - np.abs(uq) ** 2) ** 2 @ QUAD_W)) / (4 * eps ** 2)
    return EnergyReport(float(dir_), float(pot), float(dir_ + pot), tag, eps)


def gl_gradient(u: np.ndarray, mesh: Mesh, eps: float) -> np.ndarray:
    """Derivative of the discrete energy with respect to nodal (Re, Im), as complex."""
    K = stiffness(mesh)
    uq = quad_values(mesh, u)
    c = (mesh.areas[:, None] * QUAD_W[None]) * (1 - np.abs(uq) ** 2) * uq  # (nt, 3)
    loc = c @ QUAD_BARY                                                  # (nt, 3) per vertex
    g = np.zeros(mesh.n_vertices, dtype=complex)
    np.add.at(g, mesh.triangles.ravel(), loc.ravel())
    return K @ u - g / eps ** 2


def gl_hessian(u: np.ndarray, mesh: Mesh, eps: float) -> sp.csr_matrix:
    """Hessian in the real variables ordered (Re u_0..Re u_n, Im u_0..Im u_n)."""
    n = mesh.n_vertices
    K = stiffness(mesh)
    uq = quad_values(mesh, u)
    cq = mesh.areas[:, None] * QUAD_W[None] / (4 * eps ** 2)
    a, b = uq.real, uq.imag
    s = 1 - a * a - b * b
    # d^2/dv^2 of (1-|v|^2)^2 = 8 v v^T - 4 (1-|v|^2) I
    hxx = cq * (8 * a * a - 4 * s)
    hyy = cq * (8 * b * b - 4 * s)
    hxy = cq * (8 * a * b)
    N = QUAD_BARY
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()

    def blk(hq):
        return np.einsum("tq,qi,qj->tij", hq, N, N).ravel()

    Hxx = sp.csr_matrix((blk(hxx), (rows, cols)), shape=(n, n))
    Hyy = sp.csr_matrix((blk(hyy), (rows, cols)), shape=(n, n))
    Hxy = sp.csr_matrix((blk(hxy), (rows, cols)), shape=(n, n))
    return sp.bmat([[K + Hxx, Hxy], [Hxy, K + Hyy]]).tocsr()


def I0(mesh: Mesh, d: Sequence[int]) -> float:
    h0, _ = solve_h0(mesh, d)
    return dirichlet_energy(mesh, h0.values)


def L_eps(w: ComplexField, region, rho: ScalarField, grad_theta: np.ndarray, eps: float) -> float:
    """Splitting functional on a set of triangles with per-triangle grad theta."""
    mesh = w.mesh
    m = _tri_mask(mesh, region)
    tri = mesh.triangles[m]
    bnd = _region_boundary_vertices(tri)
    if np.any(np.abs(np.abs(w.values[bnd]) - 1) > 1e-6):
        raise PreconditionError("trace of w must be unimodular on the region boundary")
    A = mesh.areas[m]
    gw = tri_gradient(mesh, w.values)[m]
    rq = quad_values(mesh, rho.values, m)
    wq = quad_values(mesh, w.values, m)
    gt2 = np.sum(np.asarray(grad_theta)[m] ** 2, axis=1)
    t1 = 0.5 * np.sum(A * (rq ** 2 @ QUAD_W) * np.sum(np.abs(gw) ** 2, axis=1))
    t2 = 0.5 * np.sum(A * gt2 * ((np.abs(wq) ** 2 * rq ** 2) @ QUAD_W))
    t3 = np.sum(A * ((rq ** 4 * (1 - np.abs(wq) ** 2) ** 2) @ QUAD_W)) / (4 * eps ** 2)
    return float(t1 - t2 + t3)


def _region_boundary_vertices(tri: np.ndarray) -> np.ndarray:
    e = np.sort(tri[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    key, cnt = np.unique(e, axis=0, return_counts=True)
    return np.unique(key[cnt == 1])


# ------------------------------------------------------------ chart functionals

ChartFn = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]


def gauss_panels(breaks: Sequence[float], n: int = 16) -> tuple[np.ndarray, np.ndarray]:
    xg, wg = leggauss(n)
    X, W = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        X.append(0.5 * (b - a) * xg + 0.5 * (a + b))
        W.append(0.5 * (b - a) * wg)
    return np.concatenate(X), np.concatenate(W)


def M_lambda_chart(psi: ChartFn, lam: float, h_nodes, h_w, th_nodes, th_w) -> float:
    """1/2 iint {|d_h w|^2 + |d_theta w|^2 - |w|^2 + lam |e^{i theta} - w|^2} dh dtheta
    for w = psi e^{i theta}; the chart Jacobian makes rho^2 |grad theta|^2 dx = dh dtheta."""
    H, T = np.meshgrid(h_nodes, th_nodes, indexing="ij")
    P, Ph, Pt = psi(H, T)
    if np.any(np.abs(P) > 2 + 1e-12):
        raise PreconditionError("M_lambda requires |w| <= 2")
    f = np.abs(Ph) ** 2 + np.abs(Pt + 1j * P) ** 2 - np.abs(P) ** 2 + lam * np.abs(1 - P) ** 2
    return float(0.5 * h_w @ f @ th_w)


def L_eps_chart(psi: ChartFn, eps: float, d: int, h_nodes, h_w, th_nodes, th_w) -> float:
    """Splitting functional of w = psi e^{i theta} against u = (z/|z|)^d on the annulus chart."""
    H, T = np.meshgrid(h_nodes, th_nodes, indexing="ij")
    P, Ph, Pt = psi(H, T)
    f = (np.abs(Ph) ** 2 + np.abs(Pt + 1j * P) ** 2 - np.abs(P) ** 2
         + (1 - np.abs(P) ** 2) ** 2 * np.exp(2 * (H - 1) / d) / (2 * eps ** 2 * d * d))
    return float(0.5 * h_w @ f @ th_w)


# ------------------------------------------------------- splitting identity check

@dataclass(frozen=True)
class SplittingCheck:
    seed: int
    E_rho_w: float
    E_u: float
    L: float

    @property
    def rel_error(self) -> float:
        return abs(self.E_rho_w - self.E_u - self.L) / abs(self.E_rho_w)

    @property
    def passed(self) -> bool:
        return self.rel_error <= 1e-6

    def csv_row(self) -> str:
        return f"{self.seed},{self.E_rho_w:.15e},{self.E_u:.15e},{self.L:.15e},{self.rel_error:.3e}"


def _random_w(rng: np.random.Generator, sector, modes: int = 3, amp: float = 0.6):
    """w = e^{i g} (1 + b B) with B vanishing on the sector boundary, so |w| = 1 there.
    Returns a callable (r, phi) -> (w, w_r, w_phi)."""
    a, b, p0, p1 = sector
    J, K = np.meshgrid(np.arange(modes), np.arange(modes), indexing="ij")
    ga = rng.normal(size=J.shape) / (1 + J + K)
    gc = rng.uniform(0, 2 * np.pi, J.shape)
    ba = (rng.normal(size=J.shape) + 1j * rng.normal(size=J.shape)) * amp / (1 + J + K) ** 2
    bc = rng.uniform(0, 2 * np.pi, J.shape)
    ls, lt = np.pi / (b - a), np.pi / (p1 - p0)

    def trig(amps, ph, s, t):
        arg = J[..., None] * s + K[..., None] * t + ph[..., None]
        v = np.tensordot(amps.ravel(), np.cos(arg).reshape(amps.size, -1), 1)
        ds = -np.tensordot((amps * J).ravel(), np.sin(arg).reshape(amps.size, -1), 1)
        dt = -np.tensordot((amps * K).ravel(), np.sin(arg).reshape(amps.size, -1), 1)
        return v, ds, dt

    def w(r, phi):
        s, t = ls * (r - a), lt * (phi - p0)
        g, gs, gt = trig(ga, gc, s, t)
        be, bs, bt = trig(ba, bc, s, t)
        B, Bs, Bt = np.sin(s) * np.sin(t), np.cos(s) * np.sin(t), np.sin(s) * np.cos(t)
        e = np.exp(1j * g)
        m = 1 + be * B
        wr = ls * e * (1j * gs * m + bs * B + be * Bs)
        wp = lt * e * (1j * gt * m + bt * B + be * Bt)
        return e * m, wr, wp
    return w


def splitting_identity_check(eps: float = 0.1, d: int = 1, r_in: float = 0.3,
                             sector=(0.45, 0.9, 0.3, 2.2), n_fields: int = 20,
                             seed: int = 0, n: int = 24, panels: int = 4) -> list[SplittingCheck]:
    """E_eps(rho w) = E_eps(u) + L_eps(w) on an annular sector for the radial solution
    u = f(r) e^{i d phi} and random w that are unimodular on the sector boundary.
    Both sides use the same tensor Gauss rule in (r, phi)."""
    from .radial import annulus_profile
    prof = annulus_profile(r_in, d, eps)
    a, b, p0, p1 = sector
    r, wr_ = gauss_panels(np.linspace(a, b, panels + 1), n)
    ph, wp_ = gauss_panels(np.linspace(p0, p1, panels + 1), n)
    R, P = np.meshgrid(r, ph, indexing="ij")
    W = np.outer(wr_ * r, wp_)                       # r dr dphi
    f, fp = prof(r)
    F, Fp = f[:, None], fp[:, None]
    gt2 = d * d / R ** 2
    Eu = np.sum(W * (0.5 * (Fp ** 2 + gt2 * F ** 2) + (1 - F ** 2) ** 2 / (4 * eps ** 2)))
    rng = np.random.default_rng(seed)
    out = []
    for j in range(n_fields):
        w, w_r, w_p = _random_w(rng, sector)(R.ravel(), P.ravel())
        w, w_r, w_p = (x.reshape(R.shape) for x in (w, w_r, w_p))
        gw2 = np.abs(w_r) ** 2 + np.abs(w_p) ** 2 / R ** 2
        v_r = Fp * w + F * w_r
        v_p = F * w_p / R
        E = np.sum(W * (0.5 * (np.abs(v_r) ** 2 + np.abs(v_p) ** 2)
                        + (1 - F ** 2 * np.abs(w) ** 2) ** 2 / (4 * eps ** 2)))
        L = np.sum(W * (0.5 * F ** 2 * gw2 - 0.5 * gt2 * F ** 2 * np.abs(w) ** 2
                        + F ** 4 * (1 - np.abs(w) ** 2) ** 2 / (4 * eps ** 2)))
        out.append(SplittingCheck(j, float(E), float(Eu), float(L)))
    return out


# ------------------------------------------------------------------- residuals

@dataclass(frozen=True)
class Residual:
    interior: float                  # lumped L2 norm of the nodal residual
    boundary_modulus: float
    phase_flux: tuple[float, ...]
    interior_dual: float = float("nan")   # H^{-1} norm, sqrt(g^T K_0^{-1} g)


def boundary_lumped_length(mesh: Mesh) -> np.ndarray:
    b = np.zeros(mesh.n_vertices)
    for loop in mesh.boundary_loops:
        nxt = np.roll(loop, -1)
        L = np.linalg.norm(mesh.vertices[nxt] - mesh.vertices[loop], axis=1)
        np.add.at(b, loop, 0.5 * L)
        np.add.at(b, nxt, 0.5 * L)
    return b


@lru_cache(maxsize=8)
def _interior_stiffness_lu(mesh: Mesh):
    I = mesh.interior
    return spla.splu(stiffness(mesh)[I][:, I].tocsc())


def residual_GL(u: ComplexField, eps: float, dual: bool = False) -> Residual:
    """Euler-Lagrange residuals. The lumped interior norm does not vanish for
    nodal interpolants of smooth solutions on unstructured meshes; ``dual``
    adds the H^{-1} norm, which does."""
    mesh = u.mesh
    g = gl_gradient(u.values, mesh, eps)
    m = mesh.lumped_mass
    I = mesh.interior
    interior = float(np.sqrt(np.sum(np.abs(g[I]) ** 2 / m[I])))
    bm = mesh.boundary_mask
    bmod = float(np.max(np.abs(np.abs(u.values[bm]) - 1))) if bm.any() else 0.0
    b = boundary_lumped_length(mesh)
    flux = []
    for loop in mesh.boundary_loops:
        # derivative along the phase direction i u
        gp = np.real(np.conj(g[loop]) * 1j * u.values[loop])
        flux.append(float(np.sqrt(np.sum(gp ** 2 / b[loop]))))
    dn = float("nan")
    if dual and len(I):
        gi = g[I]
        lu = _interior_stiffness_lu(mesh)
        dn = float(np.sqrt(np.real(np.vdot(gi, lu.solve(gi.real) + 1j * lu.solve(gi.imag)))))
    return Residual(interior, bmod, tuple(flux), dn)


@dataclass(frozen=True)
class Vortex:
    triangle: int
    winding: int
    position: tuple[float, float]
    distance_to_boundary: float


def vortex_detect(u: ComplexField) -> list[Vortex]:
    mesh = u.mesh
    v = u.values[mesh.triangles]
    with np.errstate(divide="ignore", invalid="ignore"):
        inc = np.angle(np.roll(v, -1, axis=1) / v)
    inc = np.where(inc == -np.pi, np.pi, inc)
    w = np.rint(np.sum(inc, axis=1) / (2 * np.pi)).astype(int)
    idx = np.flatnonzero(w != 0)
    if len(idx) == 0:
        return []
    ctr = mesh.centroids[idx]
    dist = mesh.distance_to_boundary(ctr) if mesh.spec is not None else np.full(len(idx), np.nan)
    return [Vortex(int(t), int(w[t]), (float(c[0]), float(c[1])), float(dd))
            for t, c, dd in zip(idx, ctr, dist)]
