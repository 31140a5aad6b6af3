"""Energy descent for E_eps with unimodular boundary values and free boundary
phase, starters in prescribed degree classes, and the minimization experiments.

The descent is a projected, shifted Newton method. Unknowns are (Re u, Im u)
at interior vertices and a phase increment at each boundary vertex, so the
boundary modulus is exactly one after every step and the natural condition
u x d_nu u = 0 is left to emerge at stationarity. The reduced Hessian is
shifted until it is positive definite (inertia read off a symmetric LU
factorization) and every step passes an Armijo backtracking test.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .degree_mutation import mobius_sequence
from .elliptic import l2_norm, solve_all_V, solve_h0, stiffness
from .energy import Residual, energy_GL, gl_gradient, gl_hessian, residual_GL, vortex_detect, I0
from .errors import ConstructionError, NumericError, ParameterError
from .fields import ComplexField, DegreeSpec, abdeg, ae_distance, c1_norm, loop_degrees, tri_gradient
from .geometry import Mesh, Refinement

log = logging.getLogger(__name__)


# ------------------------------------------------------------------ starters


def harmonic_base(mesh: Mesh, d: Sequence[int]) -> ComplexField:
    """S^1-valued map with hole degrees d whose phase gradient is rot h_0.

    On an annulus this is (z/|z|)^d exactly; in general the multivalued part
    sum_k d_k arg(z - c_k) is corrected by a single-valued least-squares phase.
    """
    d = [int(x) for x in d]
    if len(d) != mesh.n_holes:
        raise ParameterError("one degree per hole required")
    z = mesh.z
    holes = [complex(*c.center) for c in mesh.spec.holes]
    base = np.ones(mesh.n_vertices, complex)
    for c, dk in zip(holes, d):
        base *= ((z - c) / np.abs(z - c)) ** dk
    if mesh.n_holes == 1 and abs(holes[0] - complex(*mesh.spec.outer.center)) < 1e-14:
        return ComplexField(mesh, base)
    h0, _ = solve_h0(mesh, d)
    gh = tri_gradient(mesh, h0.values)
    target = np.stack([-gh[:, 1], gh[:, 0]], axis=1)
    # gradient of the multivalued phase, exact per triangle centroid
    ctr = mesh.centroids[:, 0] + 1j * mesh.centroids[:, 1]
    gb = np.zeros((mesh.n_triangles, 2))
    for c, dk in zip(holes, d):
        w = ctr - c
        gb += dk * np.stack([-w.imag, w.real], axis=1) / np.abs(w)[:, None] ** 2
    G = target - gb
    load = np.zeros(mesh.n_vertices)
    np.add.at(load, mesh.triangles.ravel(),
              (np.einsum("tkd,td->tk", mesh.grads, G) * mesh.areas[:, None]).ravel())
    K = stiffness(mesh).tolil()
    K[0, :] = 0
    K[0, 0] = 1.0
    load[0] = 0.0
    psi = spla.spsolve(K.tocsc(), load)
    return ComplexField(mesh, base * np.exp(1j * psi))


def _loop_coordinate(mesh: Mesh, loop: int, x: np.ndarray) -> np.ndarray:
    """Map sending loop ``loop`` to the unit circle and the domain side into the disk."""
    c = mesh.spec.circles[loop]
    w = (x - complex(*c.center)) / c.radius
    return w if loop == 0 else 1 / w


def bubble_factor(mesh: Mesh, loop: int, sign: int, n: float, angle: float = 0.0) -> np.ndarray:
    """Moebius factor concentrated at the point of ``loop`` at ``angle``; shifts
    that loop's degree by ``sign`` and leaves the others unchanged."""
    w = _loop_coordinate(mesh, loop, mesh.z)
    rot = np.exp(-1j * angle) if loop == 0 else np.exp(1j * angle)
    m = mobius_sequence(w * rot, n)
    # on the outer loop M winds +1; the inversion used on holes reverses orientation
    raise_deg = (sign > 0) == (loop == 0)
    return m if raise_deg else np.conj(m)


def bubble_sites(shifts: Sequence[int]) -> dict[int, list[float]]:
    """Equally spaced bubble angles per loop (loop 0 outer)."""
    return {k: [2 * np.pi * j / abs(s) for j in range(abs(s))] for k, s in enumerate(shifts) if s}


def starter(mesh: Mesh, p: Sequence[int], q: int, d: Sequence[int], eps: float,
            bubble: float | None = None) -> ComplexField:
    """Element of the degree class (p, q; d): harmonic base of degrees d times
    boundary Moebius bubbles of size ``bubble`` (default min(2 eps, R / 20) for
    a loop of radius R)."""
    p, d = [int(x) for x in p], [int(x) for x in d]
    base = harmonic_base(mesh, d)
    shifts = [int(q) - sum(d)] + [pk - dk for pk, dk in zip(p, d)]
    vals = base.values.copy()
    for k, angs in bubble_sites(shifts).items():
        R = mesh.spec.circles[k].radius
        size = min(2 * eps, R / 20) if bubble is None else bubble
        n = max(2.0, R / size)         # zero of the factor sits R / n from the loop
        for a in angs:
            vals *= bubble_factor(mesh, k, int(np.sign(shifts[k])), n, a)
    bm = mesh.boundary_mask
    vals[bm] /= np.abs(vals[bm])
    u = ComplexField(mesh, vals)
    want = (int(q), *p)
    got = loop_degrees(u)
    if got != want:
        raise ConstructionError(f"starter has loop degrees {got}, wanted {want}")
    return u


def bubble_refinements(spec, p: Sequence[int], q: int, d: Sequence[int],
                       h: float = 1e-4, grade: float = 0.15) -> list:
    """Mesh refinements at the starter's bubble sites, where the flow presses
    bubbles against the boundary down to mesh scale."""
    shifts = [int(q) - sum(d)] + [int(pk) - int(dk) for pk, dk in zip(p, d)]
    out = []
    for k, angs in bubble_sites(shifts).items():
        c = spec.circles[k]
        out += [Refinement((c.center[0] + c.radius * np.cos(a), c.center[1] + c.radius * np.sin(a)), h, grade)
                for a in angs]
    return out


# ------------------------------------------------------------------ flow


@dataclass(frozen=True)
class FlowOptions:
    max_steps: int = 200
    tol: float = 1e-8
    checkpoint_every: int = 5
    armijo: float = 1e-4
    backtrack: float = 0.5
    min_alpha: float = 1e-10
    # largest phase step allowed across one boundary edge; beyond it the P1
    # trace can unwind a degree inside a single edge at a fraction of its price
    max_boundary_increment: float = np.pi / 2


@dataclass(frozen=True)
class Checkpoint:
    step: int
    energy: float
    degrees: DegreeSpec
    min_boundary_modulus: float
    l2_increment: float
    abdeg_increment: float
    lipschitz_bound: float

    @property
    def lipschitz_ok(self) -> bool:
        return self.abdeg_increment <= self.lipschitz_bound + 1e-12


@dataclass
class FlowState:
    u: ComplexField
    eps: float
    steps: int = 0
    energies: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    status: str = "running"
    residual: Residual | None = None

    @property
    def energy(self) -> float:
        return self.energies[-1]

    @property
    def monotone(self) -> bool:
        e = np.asarray(self.energies)
        return bool(np.all(np.diff(e) <= 1e-12 * np.maximum(1.0, np.abs(e[:-1]))))

    def csv(self) -> str:
        rows = ["step,energy,residual"]
        rows += [f"{i},{e:.12e},{r:.6e}" for i, (e, r) in enumerate(zip(self.energies, self.residuals))]
        return "\n".join(rows) + "\n"


def max_boundary_increment(u: ComplexField) -> float:
    """Largest principal phase increment across a boundary edge."""
    out = 0.0
    for loop in u.mesh.boundary_loops:
        v = u.values[loop]
        out = max(out, float(np.max(np.abs(np.angle(np.roll(v, -1) / v)))))
    return out


def _stationarity(r: Residual) -> float:
    return float(np.sqrt(r.interior ** 2 + sum(f * f for f in r.phase_flux)))


class _Reduced:
    """Reduced coordinates: interior (Re, Im) then one phase per boundary vertex."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.I = np.flatnonzero(mesh.interior) if mesh.interior.dtype == bool else np.asarray(mesh.interior)
        self.B = np.flatnonzero(mesh.boundary_mask)
        self.nI, self.nB = len(self.I), len(self.B)

    def jac(self, u: np.ndarray) -> sp.csr_matrix:
        n = self.mesh.n_vertices
        nI, nB = self.nI, self.nB
        rows = np.concatenate([self.I, n + self.I, self.B, n + self.B])
        cols = np.concatenate([np.arange(nI), nI + np.arange(nI), 2 * nI + np.arange(nB), 2 * nI + np.arange(nB)])
        vals = np.concatenate([np.ones(2 * nI), -u[self.B].imag, u[self.B].real])
        return sp.csr_matrix((vals, (rows, cols)), shape=(2 * n, 2 * nI + nB))

    def grad(self, u: np.ndarray, g: np.ndarray) -> np.ndarray:
        gb = np.real(np.conj(g[self.B]) * 1j * u[self.B])
        return np.concatenate([g[self.I].real, g[self.I].imag, gb])

    def hess(self, u: np.ndarray, g: np.ndarray, H: sp.csr_matrix) -> sp.csc_matrix:
        J = self.jac(u)
        curv = -np.real(np.conj(g[self.B]) * u[self.B])
        D = sp.diags(np.concatenate([np.zeros(2 * self.nI), curv]))
        return (J.T @ H @ J + D).tocsc()

    def retract(self, u: np.ndarray, s: np.ndarray) -> np.ndarray:
        v = u.copy()
        nI = self.nI
        v[self.I] += s[:nI] + 1j * s[nI:2 * nI]
        vb = u[self.B] * np.exp(1j * s[2 * nI:])
        v[self.B] = vb / np.abs(vb)
        return v


def _shifted_factor(A: sp.csc_matrix, mu0: float):
    """LU of A + mu I with the smallest tried mu >= mu0 making it positive definite."""
    n = A.shape[0]
    scale = float(np.mean(np.abs(A.diagonal()))) or 1.0
    mu = mu0
    Id = sp.identity(n, format="csc")
    for _ in range(60):
        try:
            lu = spla.splu((A + mu * Id).tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options=dict(SymmetricMode=True))
            if np.all(lu.U.diagonal() > 0):
                return lu, mu
        except RuntimeError:
            pass
        mu = max(2 * mu, 1e-6 * scale)
    raise NumericError("no positive definite shift found")


def gradient_flow(u0: ComplexField, eps: float, opts: FlowOptions | None = None,
                  V=None) -> FlowState:
    """Descent on E_eps; terminates when the stationarity residual is <= tol."""
    opts = opts or FlowOptions()
    mesh = u0.mesh
    bm = mesh.boundary_mask
    if np.any(np.abs(np.abs(u0.values[bm]) - 1) > 1e-10):
        raise ParameterError("initial field must be unimodular on the boundary")
    V = solve_all_V(mesh) if V is None else V
    cV = [c1_norm(v) for v in V]
    red = _Reduced(mesh)
    u = u0.values.astype(complex).copy()
    u[bm] /= np.abs(u[bm])
    field_u = ComplexField(mesh, u)
    E = energy_GL(field_u, eps).total
    res = residual_GL(field_u, eps)
    st = FlowState(field_u, eps, 0, [E], [_stationarity(res)], [], "running", res)
    deg0 = loop_degrees(field_u)
    last_ck = (u.copy(), abdeg(field_u, V))
    st.checkpoints.append(_checkpoint(0, field_u, E, V, cV, last_ck, deg0))
    cap = max(opts.max_boundary_increment, max_boundary_increment(field_u))
    mu = 0.0
    for step in range(1, opts.max_steps + 1):
        if st.residuals[-1] <= opts.tol:
            st.status = "converged"
            break
        g = gl_gradient(u, mesh, eps)
        gr = red.grad(u, g)
        A = red.hess(u, g, gl_hessian(u, mesh, eps))
        lu, mu = _shifted_factor(A, mu / 4 if mu > 1e-300 else 0.0)
        p = -lu.solve(gr)
        slope = float(gr @ p)
        if not slope < 0:
            p, slope = -gr, -float(gr @ gr)
        alpha, accepted, blocked = 1.0, False, False
        while alpha >= opts.min_alpha:
            v = red.retract(u, alpha * p)
            fv = ComplexField(mesh, v)
            Ev = energy_GL(fv, eps).total
            if Ev <= E + opts.armijo * alpha * slope:
                if loop_degrees(fv) == deg0 and max_boundary_increment(fv) <= cap:
                    accepted = True
                    break
                blocked = True
            alpha *= opts.backtrack
        if not accepted:
            if st.residuals[-1] <= 10 * opts.tol:
                st.status = "converged"
            else:
                # a bubble pressed against the boundary down to mesh scale
                st.status = "collapsed" if blocked else "stagnated"
            break
        if alpha < 1:
            mu = max(mu, 1e-6) * 4
        u, E, field_u = v, Ev, fv
        res = residual_GL(field_u, eps)
        st.energies.append(E)
        st.residuals.append(_stationarity(res))
        st.steps = step
        st.u, st.residual = field_u, res
        if step % opts.checkpoint_every == 0:
            ck = _checkpoint(step, field_u, E, V, cV, last_ck, deg0, max(st.energies[0], E))
            st.checkpoints.append(ck)
            last_ck = (u.copy(), np.array(ck.degrees.abdeg))
        log.debug("step %d E=%.10f res=%.3e alpha=%.3g mu=%.3g", step, E, st.residuals[-1], alpha, mu)
    else:
        st.status = "converged" if st.residuals[-1] <= opts.tol else "max_steps"
    if st.status == "running":
        st.status = "converged"
    st.checkpoints.append(_checkpoint(st.steps, field_u, E, V, cV, last_ck, deg0, max(st.energies[0], E)))
    return st


def _checkpoint(step, u: ComplexField, E, V, cV, last, deg0, lam=None) -> Checkpoint:
    mesh = u.mesh
    ab = abdeg(u, V)
    degs = loop_degrees(u)
    if degs != deg0:
        raise NumericError(f"loop degrees changed along the flow: {deg0} -> {degs}")
    du = l2_norm(mesh, u.values - last[0])
    dab = float(np.max(np.abs(ab - last[1]))) if len(ab) else 0.0
    lam = E if lam is None else lam
    bound = 2 / np.pi * max(cV, default=0.0) * np.sqrt(lam) * du
    bm = mesh.boundary_mask
    spec = DegreeSpec(tuple(degs[1:]), degs[0], tuple(int(np.rint(a)) for a in ab), tuple(map(float, ab)))
    return Checkpoint(step, E, spec, float(np.min(np.abs(u.values[bm]))), du, dab, bound)


# ------------------------------------------------------------------ classes and experiments


def class_membership(u: ComplexField, p: Sequence[int], q: int, d: Sequence[int],
                     V=None) -> tuple[bool, DegreeSpec]:
    V = solve_all_V(u.mesh) if V is None else V
    degs = loop_degrees(u)
    ab = abdeg(u, V)
    spec = DegreeSpec(tuple(int(x) for x in p), int(q), tuple(int(x) for x in d), tuple(map(float, ab)))
    ok = degs == (int(q), *spec.p) and spec.in_class()
    return bool(ok), DegreeSpec(tuple(degs[1:]), degs[0], spec.d, spec.abdeg)


@dataclass
class ExperimentReport:
    p: tuple
    q: int
    d: tuple
    eps: float
    I0: float
    ae: int
    target: float                   # I0 + pi ae
    energy_start: float
    energy: float
    in_class_start: bool
    in_class_end: bool
    degrees: DegreeSpec
    residual: Residual
    vortices: list
    flow: FlowState

    @property
    def ratio(self) -> float:
        return self.energy / self.target

    @property
    def class_escape(self) -> bool:
        return self.in_class_start and not self.in_class_end

    def csv_row(self) -> str:
        return (f"{self.eps:.6g},{self.energy:.12e},{self.I0:.12e},{self.ae},{self.target:.12e},"
                f"{self.ratio:.8f},{int(self.in_class_end)},{self.flow.status},{self.flow.steps}")


def local_min_experiment(p: Sequence[int], q: int, d: Sequence[int], eps: float, mesh: Mesh,
                         opts: FlowOptions | None = None, bubble: float | None = None) -> ExperimentReport:
    p, d = tuple(int(x) for x in p), tuple(int(x) for x in d)
    if any(pk > dk for pk, dk in zip(p, d)) or q > sum(d):
        raise ParameterError("not a good configuration: need p_i <= d_i and q <= sum d")
    V = solve_all_V(mesh)
    u0 = starter(mesh, p, q, d, eps, bubble)
    ok0, _ = class_membership(u0, p, q, d, V)
    st = gradient_flow(u0, eps, opts, V)
    ok1, spec = class_membership(st.u, p, q, d, V)
    i0 = I0(mesh, d)
    ae = ae_distance((d, sum(d)), (p, q))
    if not ok1:
        log.warning("class escape: abdeg %s left the band around %s", spec.abdeg, d)
    return ExperimentReport(p, int(q), d, eps, i0, ae, i0 + np.pi * ae, st.energies[0], st.energy,
                            ok0, ok1, spec, st.residual, vortex_detect(st.u), st)


@dataclass
class MultiplicityReport:
    runs: list
    abdeg: list
    min_separation: float
    all_in_band: bool

    @property
    def passed(self) -> bool:
        return self.all_in_band and self.min_separation >= 0.5


def multiplicity_probe(p: Sequence[int], q: int, d: Sequence[int], M: int, eps: float, mesh_for,
                       opts: FlowOptions | None = None, bubble: float | None = None) -> MultiplicityReport:
    """Run d + k (k = 1..M) ladders at fixed (p, q); ``mesh_for(dk)`` supplies a mesh."""
    runs = []
    for k in range(1, M + 1):
        dk = tuple(int(x) + k for x in d)
        runs.append(local_min_experiment(p, q, dk, eps, mesh_for(dk), opts, bubble))
    ab = [np.asarray(r.degrees.abdeg) for r in runs]
    sep = min((float(np.max(np.abs(a - b))) for i, a in enumerate(ab) for b in ab[i + 1:]), default=np.inf)
    return MultiplicityReport(runs, [tuple(map(float, a)) for a in ab], sep, all(r.in_class_end for r in runs))
