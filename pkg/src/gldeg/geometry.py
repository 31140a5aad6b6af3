"""Circle-with-circular-holes domains, a distance-function mesher and the
analytic annulus chart.

Boundary loop 0 is the outer circle, loop ``k`` (k >= 1) is hole ``k``.
Every loop is stored counterclockwise in the plane, which is the direct
orientation of the outer circle and of each hole circle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.spatial import Delaunay

from .errors import DomainError, GeometryError, ResolutionError


@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float

    @property
    def c(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    def to_json(self) -> dict:
        return {"c": [float(self.center[0]), float(self.center[1])], "r": float(self.radius)}

    @classmethod
    def from_json(cls, obj: dict) -> "Circle":
        c = obj["c"]
        return cls((float(c[0]), float(c[1])), float(obj["r"]))


@dataclass(frozen=True)
class Refinement:
    """Local edge length ``h`` at ``at``, growing linearly with slope ``grade``."""
    at: tuple[float, float]
    h: float
    grade: float = 0.25

    def to_json(self) -> dict:
        return {"at": [float(self.at[0]), float(self.at[1])], "h": self.h, "grade": self.grade}

    @classmethod
    def from_json(cls, obj: dict) -> "Refinement":
        a = obj["at"]
        return cls((float(a[0]), float(a[1])), float(obj["h"]), float(obj.get("grade", 0.25)))


@dataclass(frozen=True)
class DomainSpec:
    outer: Circle
    holes: tuple[Circle, ...]
    target_edge_length: float
    refine: tuple[Refinement, ...] = ()

    @property
    def n_holes(self) -> int:
        return len(self.holes)

    @property
    def circles(self) -> tuple[Circle, ...]:
        return (self.outer,) + tuple(self.holes)

    def validate(self) -> None:
        h = self.target_edge_length
        if not (h > 0 and self.outer.radius > 0):
            raise GeometryError("edge length and outer radius must be positive")
        R, c0 = self.outer.radius, self.outer.c
        for i, hole in enumerate(self.holes, 1):
            if hole.radius <= 0:
                raise GeometryError(f"hole {i}: radius must be positive")
            gap = R - np.linalg.norm(hole.c - c0) - hole.radius
            if gap <= 0:
                raise GeometryError(f"hole {i} is not strictly inside the outer disk")
            if gap < 0.9 * h:
                raise ResolutionError(f"hole {i}: gap {gap:.3g} to the outer circle below edge length")
            if 2 * np.pi * hole.radius < 8 * self._min_size_on(hole):
                raise ResolutionError(f"hole {i}: fewer than 8 boundary edges")
        for i in range(len(self.holes)):
            for j in range(i + 1, len(self.holes)):
                a, b = self.holes[i], self.holes[j]
                gap = np.linalg.norm(a.c - b.c) - a.radius - b.radius
                if gap <= 0:
                    raise GeometryError(f"holes {i + 1} and {j + 1} overlap")
                if gap < 0.9 * h:
                    raise ResolutionError(f"holes {i + 1} and {j + 1} not separated at this edge length")
        for ref in self.refine:
            if not (0 < ref.h <= h and ref.grade > 0):
                raise GeometryError("refinement needs 0 < h <= target edge length and grade > 0")

    def _min_size_on(self, circ: Circle) -> float:
        phi = np.linspace(0, 2 * np.pi, 256, endpoint=False)
        pts = circ.c + circ.radius * np.c_[np.cos(phi), np.sin(phi)]
        return float(self.size(pts).min())

    def signed_distance(self, p: np.ndarray) -> np.ndarray:
        """Negative inside the perforated domain."""
        p = np.atleast_2d(p)
        d = np.linalg.norm(p - self.outer.c, axis=1) - self.outer.radius
        for hole in self.holes:
            d = np.maximum(d, hole.radius - np.linalg.norm(p - hole.c, axis=1))
        return d

    def size(self, p: np.ndarray) -> np.ndarray:
        """Target local edge length."""
        p = np.atleast_2d(p)
        s = np.full(len(p), self.target_edge_length)
        for ref in self.refine:
            s = np.minimum(s, ref.h + ref.grade * np.linalg.norm(p - np.asarray(ref.at), axis=1))
        return s

    def to_json(self) -> dict:
        out = {"outer": self.outer.to_json(), "holes": [c.to_json() for c in self.holes],
               "h": self.target_edge_length}
        if self.refine:
            out["refine"] = [r.to_json() for r in self.refine]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "DomainSpec":
        return cls(Circle.from_json(obj["outer"]),
                   tuple(Circle.from_json(c) for c in obj.get("holes", [])),
                   float(obj["h"]),
                   tuple(Refinement.from_json(r) for r in obj.get("refine", [])))

    @classmethod
    def annulus(cls, r: float = 0.3, h: float = 0.05, refine: Sequence[Refinement] = ()) -> "DomainSpec":
        return cls(Circle((0.0, 0.0), 1.0), (Circle((0.0, 0.0), r),), h, tuple(refine))

    @classmethod
    def disk(cls, h: float = 0.05, refine: Sequence[Refinement] = ()) -> "DomainSpec":
        return cls(Circle((0.0, 0.0), 1.0), (), h, tuple(refine))


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray                  # (nv, 2)
    triangles: np.ndarray                 # (nt, 3), counterclockwise
    boundary_loops: tuple[np.ndarray, ...]  # loop 0 outer, loop k hole k
    vertex_kind: np.ndarray               # -1 interior, k on loop k
    spec: DomainSpec | None = field(default=None, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_holes(self) -> int:
        return len(self.boundary_loops) - 1

    @cached_property
    def z(self) -> np.ndarray:
        return self.vertices[:, 0] + 1j * self.vertices[:, 1]

    @cached_property
    def edges(self) -> np.ndarray:
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0)

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        a, b = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    @cached_property
    def grads(self) -> np.ndarray:
        """Gradients of the three barycentric hat functions, shape (nt, 3, 2)."""
        p = self.vertices[self.triangles]
        # gradient of lambda_i is rot90 of the opposite edge over 2*area
        e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
        g = np.stack([-e[..., 1], e[..., 0]], axis=-1)
        return g / (2 * self.areas)[:, None, None]

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        return self.vertex_kind >= 0

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.vertex_kind < 0)

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        m = np.zeros(self.n_vertices)
        np.add.at(m, self.triangles.ravel(), np.repeat(self.areas / 3, 3))
        return m

    def euler_characteristic(self) -> int:
        return self.n_vertices - len(self.edges) + self.n_triangles

    def min_angle_deg(self) -> float:
        return float(triangle_angles(self.vertices, self.triangles).min())

    def distance_to_boundary(self, pts: np.ndarray) -> np.ndarray:
        if self.spec is None:
            raise GeometryError("mesh carries no domain description")
        return -self.spec.signed_distance(pts)

    def check(self, min_angle: float = 20.0) -> None:
        """Assert the structural invariants; raises ``ResolutionError``."""
        n = self.n_holes
        if self.euler_characteristic() != 1 - n:
            raise ResolutionError(f"Euler characteristic {self.euler_characteristic()} != {1 - n}")
        for k, loop in enumerate(self.boundary_loops):
            if polygon_area(self.vertices[loop]) <= 0:
                raise ResolutionError(f"loop {k} not counterclockwise")
        if np.any(self.areas <= 0):
            raise ResolutionError("inverted triangle")
        ma = self.min_angle_deg()
        if ma < min_angle:
            raise ResolutionError(f"minimum angle {ma:.2f} deg below {min_angle}")


def polygon_area(p: np.ndarray) -> float:
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def triangle_angles(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    out = np.empty(triangles.shape)
    for i in range(3):
        a = p[:, (i + 1) % 3] - p[:, i]
        b = p[:, (i + 2) % 3] - p[:, i]
        cosang = np.sum(a * b, 1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        out[:, i] = np.degrees(np.arccos(np.clip(cosang, -1, 1)))
    return out


def _circle_nodes(circ: Circle, spec: DomainSpec) -> np.ndarray:
    """Nodes on a circle spaced by the local size function."""
    m = 4096
    phi = [np.linspace(0, 2 * np.pi, m + 1)]
    # the uniform samples cannot see refinements finer than 2 pi R / m
    for r in spec.refine:
        a0 = np.arctan2(r.at[1] - circ.center[1], r.at[0] - circ.center[0])
        off = np.geomspace(0.1 * r.h, 2 * np.pi * 4 / m, 400) / circ.radius
        phi.append(np.mod(a0 + np.concatenate([-off, off]), 2 * np.pi))
    phi = np.unique(np.concatenate(phi))
    phi = np.append(phi[phi < 2 * np.pi], 2 * np.pi)
    pts = circ.c + circ.radius * np.c_[np.cos(phi), np.sin(phi)]
    dens = circ.radius / spec.size(pts)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(phi))])
    n = max(int(np.ceil(cum[-1])), 8)
    ang = np.interp(np.arange(n) * cum[-1] / n, cum, phi)
    return circ.c + circ.radius * np.c_[np.cos(ang), np.sin(ang)]


def _seed_points(spec: DomainSpec, rng: np.random.Generator) -> np.ndarray:
    """Quadtree leaves sized by the local edge length."""
    R, c0 = spec.outer.radius, spec.outer.c
    side = spec.target_edge_length
    n = int(np.ceil(2 * R / side))
    g = (np.arange(n) + 0.5) * side - n * side / 2
    X, Y = np.meshgrid(g, g)
    centers = c0 + np.c_[X.ravel(), Y.ravel()]
    leaves = []
    while len(centers):
        keep = spec.signed_distance(centers) < 0.75 * side
        centers = centers[keep]
        split = spec.size(centers) < 0.9 * side
        leaves.append(centers[~split])
        c = centers[split]
        q = side / 4
        centers = np.concatenate([c + [dx, dy] for dx in (-q, q) for dy in (-q, q)]) if len(c) else c
        side /= 2
    p = np.concatenate(leaves)
    h = spec.size(p)
    p = p + 0.05 * h[:, None] * rng.standard_normal(p.shape)
    return p[spec.signed_distance(p) < -0.5 * spec.size(p)]


def _triangulate(p: np.ndarray, spec: DomainSpec) -> np.ndarray:
    t = Delaunay(p).simplices
    ctr = p[t].mean(axis=1)
    return t[spec.signed_distance(ctr) < -1e-12 * spec.target_edge_length]


def _extract_loops(tri: np.ndarray, nv: int) -> list[np.ndarray]:
    e = tri[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    key = np.sort(e, axis=1)
    _, inv, cnt = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    bnd = e[cnt[inv.ravel()] == 1]      # oriented with the domain on the left
    nxt = -np.ones(nv, dtype=int)
    if np.any(np.bincount(bnd[:, 0], minlength=nv) > 1):
        raise ResolutionError("boundary is not a union of simple loops")
    nxt[bnd[:, 0]] = bnd[:, 1]
    seen = np.zeros(nv, dtype=bool)
    loops = []
    for s in bnd[:, 0]:
        if seen[s]:
            continue
        loop = [s]
        seen[s] = True
        v = nxt[s]
        while v != s:
            if v < 0 or seen[v]:
                raise ResolutionError("open boundary chain")
            loop.append(v)
            seen[v] = True
            v = nxt[v]
        loops.append(np.array(loop))
    return loops


def build_mesh(spec: DomainSpec, *, min_angle: float = 20.0, seed: int = 0,
               max_iter: int = 400, tol: float = 1e-3) -> Mesh:
    """Distance-function mesher with exact boundary nodes on every circle."""
    spec.validate()
    rng = np.random.default_rng(seed)
    fixed = [_circle_nodes(c, spec) for c in spec.circles]
    kind_fixed = np.concatenate([np.full(len(f), k) for k, f in enumerate(fixed)])
    pfix = np.concatenate(fixed)
    nfix = len(pfix)
    pin = _seed_points(spec, rng)
    p = np.vstack([pfix, pin])

    dt, fscale = 0.2, 1.2
    pold = np.full_like(p, np.inf)
    for _ in range(max_iter):
        hloc = spec.size(p)
        if np.max(np.linalg.norm(p - pold, axis=1) / hloc) > 0.1:
            pold = p.copy()
            tri = _triangulate(p, spec)
            bars = np.unique(np.sort(tri[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1), axis=0)
        bv = p[bars[:, 0]] - p[bars[:, 1]]
        L = np.linalg.norm(bv, axis=1)
        hb = spec.size(0.5 * (p[bars[:, 0]] + p[bars[:, 1]]))
        L0 = hb * fscale * np.sqrt(np.sum(L ** 2) / np.sum(hb ** 2))
        F = np.maximum(L0 - L, 0)
        fv = (F / L)[:, None] * bv
        ftot = np.zeros_like(p)
        np.add.at(ftot, bars[:, 0], fv)
        np.add.at(ftot, bars[:, 1], -fv)
        ftot[:nfix] = 0
        step = dt * ftot
        p = p + step
        # pull escaping interior points back inside
        d = spec.signed_distance(p[nfix:])
        lim = -0.3 * spec.size(p[nfix:])
        out = d > lim
        if np.any(out):
            q = p[nfix:][out]
            eps = 1e-8 * spec.target_edge_length
            gx = (spec.signed_distance(q + [eps, 0]) - d[out]) / eps
            gy = (spec.signed_distance(q + [0, eps]) - d[out]) / eps
            q -= ((d[out] - lim[out]))[:, None] * np.c_[gx, gy]
            p[nfix + np.flatnonzero(out)] = q
        if np.max(np.linalg.norm(step[nfix:], axis=1) / hloc[nfix:]) < tol:
            break

    tri = _triangulate(p, spec)
    used = np.unique(tri)
    if len(used) < len(p):
        remap = -np.ones(len(p), dtype=int)
        remap[used] = np.arange(len(used))
        if np.any(used[:nfix] != np.arange(nfix)) or len(used) < nfix:
            raise ResolutionError("boundary node dropped from triangulation")
        p, tri = p[used], remap[tri]
    a = p[tri]
    det = (a[:, 1, 0] - a[:, 0, 0]) * (a[:, 2, 1] - a[:, 0, 1]) - (a[:, 1, 1] - a[:, 0, 1]) * (a[:, 2, 0] - a[:, 0, 0])
    tri = np.where((det < 0)[:, None], tri[:, [0, 2, 1]], tri)

    kind = np.full(len(p), -1)
    kind[:nfix] = kind_fixed
    raw = _extract_loops(tri, len(p))
    if len(raw) != len(fixed):
        raise ResolutionError(f"found {len(raw)} boundary loops, expected {len(fixed)}")
    loops: list[np.ndarray | None] = [None] * len(fixed)
    for loop in raw:
        ks = np.unique(kind[loop])
        if len(ks) != 1 or ks[0] < 0 or len(loop) != len(fixed[ks[0]]):
            raise ResolutionError("boundary loop does not follow its circle")
        k = int(ks[0])
        # the domain lies left of the outer loop and right of each hole loop
        loops[k] = loop if k == 0 else loop[::-1].copy()
    mesh = Mesh(p, tri.astype(np.int64), tuple(loops), kind, spec)
    mesh.check(min_angle)
    return mesh


def export_mesh_text(mesh: Mesh) -> str:
    """Plain node/element listing: one vertex, then one triangle, per line."""
    lines = [f"# nodes {mesh.n_vertices}"]
    lines += [f"{i} {x:.17g} {y:.17g} {k}" for i, ((x, y), k) in enumerate(zip(mesh.vertices, mesh.vertex_kind))]
    lines.append(f"# elements {mesh.n_triangles}")
    lines += [f"{i} {a} {b} {c}" for i, (a, b, c) in enumerate(mesh.triangles)]
    lines.append(f"# loops {len(mesh.boundary_loops)}")
    lines += [" ".join(map(str, loop)) for loop in mesh.boundary_loops]
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------- annulus chart

@dataclass(frozen=True)
class AnnulusChart:
    """Exact phase chart of (z/|z|)^d on {r < |z| < 1}."""
    inner_radius: float
    d: int = 1

    def __post_init__(self):
        if not 0 < self.inner_radius < 1:
            raise DomainError("inner radius must lie in (0, 1)")


@dataclass(frozen=True)
class ChartValues:
    theta: np.ndarray
    h: np.ndarray
    grad_theta: np.ndarray
    rho: np.ndarray


def annulus_exact_chart(chart: AnnulusChart, point) -> ChartValues:
    """theta = d arg z, h = 1 + d ln|z|, grad theta = d z^perp/|z|^2, rho = 1."""
    p = np.asarray(point, dtype=float)
    scalar = p.ndim == 1
    p = np.atleast_2d(p)
    rad = np.hypot(p[:, 0], p[:, 1])
    if np.any(rad <= chart.inner_radius) or np.any(rad > 1):
        raise DomainError("point outside the annulus")
    d = chart.d
    theta = d * np.arctan2(p[:, 1], p[:, 0])
    h = 1 + d * np.log(rad)
    g = d * np.c_[-p[:, 1], p[:, 0]] / rad[:, None] ** 2
    rho = np.ones_like(rad)
    if scalar:
        return ChartValues(theta[0], h[0], g[0], rho[0])
    return ChartValues(theta, h, g, rho)
