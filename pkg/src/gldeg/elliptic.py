"""P1 finite-element solvers for the harmonic auxiliary problems."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericError
from .fields import ComplexField, ScalarField, cross, tri_gradient
from .geometry import Mesh

RESIDUAL_TOL = 1e-10


@lru_cache(maxsize=16)
def stiffness(mesh: Mesh) -> sp.csr_matrix:
    g = mesh.grads
    ke = np.einsum("tid,tjd->tij", g, g) * mesh.areas[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    A = sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(mesh.n_vertices,) * 2)
    return ((A + A.T) * 0.5).tocsr()


@lru_cache(maxsize=16)
def mass(mesh: Mesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix."""
    me = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 12.0
    vals = mesh.areas[:, None, None] * me[None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(mesh.n_vertices,) * 2)


def l2_norm(mesh: Mesh, values: np.ndarray) -> float:
    v = np.asarray(values)
    M = mass(mesh)
    return float(np.sqrt(np.real(np.vdot(v, M @ v))))


def dirichlet_energy(mesh: Mesh, values: np.ndarray) -> float:
    g = tri_gradient(mesh, values)
    return float(0.5 * np.sum(mesh.areas * np.sum(np.abs(g) ** 2, axis=1)))


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    free: np.ndarray          # reduced unknown -> role description is caller-defined


def cg_solve(A: sp.spmatrix, b: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
    """Preconditioned CG; checks the relative residual afterwards."""
    A = sp.csc_matrix(A)
    nb = np.linalg.norm(b)
    if nb == 0:
        return np.zeros_like(b)
    try:
        ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=20)
        M = spla.LinearOperator(A.shape, ilu.solve)
    except RuntimeError:
        M = None
    x, info = spla.cg(A, b, x0=x0, rtol=1e-12, atol=0.0, maxiter=20 * A.shape[0], M=M)
    res = np.linalg.norm(A @ x - b) / nb
    if res > RESIDUAL_TOL:
        # one refinement sweep before giving up
        x, info = spla.cg(A, b, x0=x, rtol=1e-13, atol=0.0, maxiter=20 * A.shape[0], M=M)
        res = np.linalg.norm(A @ x - b) / nb
        if res > RESIDUAL_TOL:
            raise NumericError(f"CG stalled at relative residual {res:.2e} (info={info})")
    return x


def dirichlet_solve(mesh: Mesh, boundary_values: np.ndarray) -> np.ndarray:
    """Discrete harmonic function with given values on all boundary vertices.

    ``boundary_values`` is a full-length vector; only boundary entries are read.
    """
    A = stiffness(mesh)
    bmask = mesh.boundary_mask
    free = mesh.interior
    x = np.array(boundary_values, dtype=float, copy=True)
    x[~bmask] = 0.0
    if len(free):
        rhs = -(A @ x)[free]
        x[free] = cg_solve(A[free][:, free], rhs)
    return x


def solve_V(mesh: Mesh, i: int) -> ScalarField:
    """V = 0 on hole loop i, V = 1 on every other loop, harmonic inside."""
    bv = np.where(mesh.vertex_kind == i, 0.0, 1.0)
    return ScalarField(mesh, dirichlet_solve(mesh, bv))


def solve_all_V(mesh: Mesh) -> list[ScalarField]:
    return [solve_V(mesh, i) for i in range(1, mesh.n_holes + 1)]


def _floating_basis(mesh: Mesh) -> sp.csr_matrix:
    """Columns: one hat per interior vertex, then one loop-sum per hole."""
    nv, free, nh = mesh.n_vertices, mesh.interior, mesh.n_holes
    rows = list(free)
    cols = list(range(len(free)))
    for k in range(1, nh + 1):
        loop = mesh.boundary_loops[k]
        rows += list(loop)
        cols += [len(free) + k - 1] * len(loop)
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(nv, len(free) + nh))


def _floating_solve(mesh: Mesh, load: np.ndarray, hole_load: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minimize 1/2 a(h,h) - <load,h> - sum_k hole_load_k c_k with h = 1 on the
    outer loop and h = c_k on hole loop k."""
    A = stiffness(mesh)
    T = _floating_basis(mesh)
    h_fix = (mesh.vertex_kind == 0).astype(float)
    Ar = (T.T @ A @ T).tocsr()
    br = T.T @ (load - A @ h_fix)
    br[len(mesh.interior):] += hole_load
    x = cg_solve(Ar, br)
    h = T @ x + h_fix
    return h, x[len(mesh.interior):]


def loop_flux(mesh: Mesh, h: np.ndarray, k: int) -> float:
    """Weak flux of h through hole loop k, normal pointing out of the hole."""
    r = stiffness(mesh) @ h
    return float(-np.sum(r[mesh.boundary_loops[k]]))


def solve_h0(mesh: Mesh, d: Sequence[int]) -> tuple[ScalarField, np.ndarray]:
    """Harmonic, 1 on the outer loop, floating constant on hole k with flux 2 pi d_k."""
    d = np.asarray(d, dtype=float)
    if len(d) != mesh.n_holes:
        raise ValueError("one degree per hole required")
    h, c = _floating_solve(mesh, np.zeros(mesh.n_vertices), -2 * np.pi * d)
    for k in range(1, mesh.n_holes + 1):
        fl = loop_flux(mesh, h, k)
        if abs(fl - 2 * np.pi * d[k - 1]) > 1e-8 * max(1.0, abs(2 * np.pi * d[k - 1])):
            raise NumericError(f"flux constraint on hole {k} violated: {fl}")
    return ScalarField(mesh, h), c


def current(u: ComplexField) -> np.ndarray:
    """u x grad u per triangle, u taken at the centroid. Shape (nt, 2)."""
    mesh = u.mesh
    gu = tri_gradient(mesh, u.values)
    uc = u.values[mesh.triangles].mean(axis=1)
    return np.stack([cross(uc, gu[:, 0]), cross(uc, gu[:, 1])], axis=1)


def harmonic_conjugate(u: ComplexField) -> tuple[ScalarField, np.ndarray]:
    """Least-squares h with rot(h) = u x grad u, h = 1 outside, constant per hole."""
    mesh = u.mesh
    j = current(u)
    target = np.stack([j[:, 1], -j[:, 0]], axis=1)  # grad h = (j2, -j1)
    load = np.zeros(mesh.n_vertices)
    contrib = np.einsum("tkd,td->tk", mesh.grads, target) * mesh.areas[:, None]
    np.add.at(load, mesh.triangles.ravel(), contrib.ravel())
    h, c = _floating_solve(mesh, load, np.zeros(mesh.n_holes))
    return ScalarField(mesh, h), c


def harmonic_extension(mesh: Mesh, trace) -> ComplexField:
    """Componentwise discrete harmonic extension of boundary data.

    ``trace`` is a callable of boundary points (complex) or a full-length array.
    """
    if callable(trace):
        bv = np.zeros(mesh.n_vertices, dtype=complex)
        bm = mesh.boundary_mask
        bv[bm] = trace(mesh.z[bm])
    else:
        bv = np.asarray(trace, dtype=complex)
    re = dirichlet_solve(mesh, bv.real)
    im = dirichlet_solve(mesh, bv.imag)
    return ComplexField(mesh, re + 1j * im)
