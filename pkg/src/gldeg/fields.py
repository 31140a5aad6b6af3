"""Discrete fields on a mesh, loop degrees, the approximate bulk degree and
phase lifting."""
from __future__ import annotations

import io
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegeneracyError, GldegError, TopologyError
from .geometry import Mesh

DEGREE_MIN_MODULUS = 0.1


@dataclass(frozen=True, eq=False)
class ScalarField:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != self.mesh.n_vertices:
            raise ValueError("one value per vertex required")

    def to_csv(self) -> str:
        return field_csv(self.mesh, {"value": self.values})


@dataclass(frozen=True, eq=False)
class ComplexField:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != self.mesh.n_vertices:
            raise ValueError("one value per vertex required")

    @property
    def modulus(self) -> np.ndarray:
        return np.abs(self.values)

    def to_csv(self) -> str:
        return field_csv(self.mesh, {"re": self.values.real, "im": self.values.imag})


@dataclass(frozen=True)
class DegreeSpec:
    p: tuple[int, ...]          # hole degrees
    q: int                      # outer degree
    d: tuple[int, ...]          # target bulk degrees
    abdeg: tuple[float, ...] = ()

    @property
    def d_total(self) -> int:
        return int(sum(self.d))

    def abdeg_defect(self) -> float:
        if not self.abdeg:
            return float("inf")
        return float(np.max(np.abs(np.asarray(self.abdeg) - np.asarray(self.d)))) if self.d else 0.0

    def in_class(self) -> bool:
        return self.abdeg_defect() <= 1 / 3


def field_csv(mesh: Mesh, columns: dict[str, np.ndarray]) -> str:
    buf = io.StringIO()
    buf.write(",".join(["vertex", "x", "y"] + list(columns)) + "\n")
    cols = list(columns.values())
    for i, (x, y) in enumerate(mesh.vertices):
        buf.write(f"{i},{x:.12e},{y:.12e}," + ",".join(f"{c[i]:.12e}" for c in cols) + "\n")
    return buf.getvalue()


def cross(a, b):
    """a x b = Re(a) Im(b) - Im(a) Re(b) for complex numbers read as 2-vectors."""
    return np.imag(np.conj(a) * b)


def tri_gradient(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Constant P1 gradient per triangle, shape (nt, 2) (complex if values are)."""
    return np.einsum("tk,tkj->tj", values[mesh.triangles], mesh.grads)


def winding_number(values: np.ndarray) -> float:
    """Sum of principal angle increments of a closed sampled trace over 2 pi."""
    v = np.asarray(values)
    inc = np.angle(np.roll(v, -1) / v)
    inc = np.where(inc == -np.pi, np.pi, inc)
    return float(np.sum(inc) / (2 * np.pi))


@dataclass(frozen=True)
class DegreeResult:
    raw: float
    rounded: int

    @property
    def defect(self) -> float:
        return abs(self.raw - self.rounded)


def degree(u: ComplexField, loop_index: int) -> DegreeResult:
    loop = u.mesh.boundary_loops[loop_index]
    vals = u.values[loop]
    if np.any(np.abs(vals) < DEGREE_MIN_MODULUS):
        raise DegeneracyError(f"loop {loop_index}: boundary modulus below {DEGREE_MIN_MODULUS}")
    raw = winding_number(vals)
    return DegreeResult(raw, int(np.rint(raw)))


def loop_degrees(u: ComplexField) -> tuple[int, ...]:
    """Rounded degrees of every loop, outer loop first."""
    return tuple(degree(u, k).rounded for k in range(len(u.mesh.boundary_loops)))


def abdeg(u: ComplexField, V: Sequence[ScalarField]) -> np.ndarray:
    mesh = u.mesh
    gu = tri_gradient(mesh, u.values)
    uc = u.values[mesh.triangles].mean(axis=1)
    out = []
    for Vi in V:
        if Vi.mesh is not mesh:
            raise GldegError("abdeg: V and u live on different meshes")
        gv = tri_gradient(mesh, Vi.values)
        integrand = cross(uc, gv[:, 0] * gu[:, 1] - gv[:, 1] * gu[:, 0])
        out.append(np.sum(mesh.areas * integrand) / (2 * np.pi))
    return np.array(out)


def c1_norm(V: ScalarField) -> float:
    """Discrete C^1 norm: sup |V| + sup |grad V| over triangles."""
    return float(np.max(np.abs(V.values)) + np.max(np.linalg.norm(tri_gradient(V.mesh, V.values), axis=1)))


def lift_phase(u: ComplexField, region, anchor: int) -> ScalarField:
    """Continuous phase on a simply connected set of triangles.

    ``region`` is a boolean mask or index array over triangles. Values outside
    the region are NaN.
    """
    mesh = u.mesh
    tri = mesh.triangles[np.asarray(region)]
    verts = np.unique(tri)
    e = np.unique(np.sort(tri[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1), axis=0)
    if len(verts) - len(e) + len(tri) != 1:
        raise TopologyError("region is not simply connected")
    if anchor not in set(verts.tolist()):
        raise GldegError("anchor vertex outside region")
    if np.any(np.abs(u.values[verts]) == 0):
        raise DegeneracyError("field vanishes on the region")
    nbrs: dict[int, list[int]] = {int(v): [] for v in verts}
    for a, b in e:
        nbrs[int(a)].append(int(b))
        nbrs[int(b)].append(int(a))

    def inc(a, b):
        x = np.angle(u.values[b] / u.values[a])
        return np.pi if x == -np.pi else x

    theta = np.full(mesh.n_vertices, np.nan)
    theta[anchor] = np.mod(np.angle(u.values[anchor]), 2 * np.pi)
    queue = deque([anchor])
    while queue:
        a = queue.popleft()
        for b in nbrs[a]:
            if np.isnan(theta[b]):
                theta[b] = theta[a] + inc(a, b)
                queue.append(b)
    # a triangle whose three principal increments do not close winds around a zero
    dif = theta[e[:, 1]] - theta[e[:, 0]]
    pr = np.angle(u.values[e[:, 1]] / u.values[e[:, 0]])
    pr = np.where(pr == -np.pi, np.pi, pr)
    if np.any(np.abs(dif - pr) > 1e-9):
        raise DegeneracyError("phase winds inside a triangle of the region")
    return ScalarField(mesh, theta)


def ae_distance(a: tuple[Sequence[int], int], b: tuple[Sequence[int], int]) -> int:
    """Degree distance sum_i |d_i - p_i| + |d - q|."""
    (d, dt), (p, q) = a, b
    if len(d) != len(p):
        raise ValueError("hole counts differ")
    return int(sum(abs(int(x) - int(y)) for x, y in zip(d, p)) + abs(int(dt) - int(q)))
