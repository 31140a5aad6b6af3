"""One-dimensional oracles for radial Ginzburg-Landau solutions f(r) e^{i d phi}.

The radial equation is f'' + f'/r - d^2 f / r^2 + f (1 - f^2) / eps^2 = 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_bvp, solve_ivp
from scipy.optimize import brentq

from .errors import NumericError


@dataclass
class RadialProfile:
    d: int
    eps: float
    r_min: float
    sol: object          # callable r -> (f, f')

    def __call__(self, r):
        y = self.sol(np.asarray(r, dtype=float))
        return y[0], y[1]


def _rhs(d, eps):
    def f(r, y):
        return np.vstack([y[1], -y[1] / r + d * d * y[0] / r ** 2 - y[0] * (1 - y[0] ** 2) / eps ** 2])
    return f


def annulus_profile(r_in: float, d: int, eps: float, tol: float = 1e-10) -> RadialProfile:
    """f on (r_in, 1) with f = 1 at both radii (solve_bvp collocation)."""
    r = np.linspace(r_in, 1.0, 400)
    y0 = np.vstack([np.ones_like(r), np.zeros_like(r)])

    def bc(ya, yb):
        return np.array([ya[0] - 1.0, yb[0] - 1.0])

    res = solve_bvp(_rhs(d, eps), bc, r, y0, tol=tol, max_nodes=200000)
    if not res.success:
        raise NumericError(f"radial BVP failed: {res.message}")
    return RadialProfile(d, eps, r_in, res.sol)


def disk_profile(d: int, eps: float, rtol: float = 1e-10) -> RadialProfile:
    """f on (0, 1) with f ~ a r^d at 0 and f(1) = 1, by shooting on a."""
    r0 = 1e-4
    rhs = _rhs(d, eps)

    def shoot(a, dense=False):
        # two-term series start f = a r^d (1 - r^2 / (4 (d+1) eps^2))
        c = 1.0 / (4 * (d + 1) * eps ** 2)
        f0 = a * r0 ** d * (1 - c * r0 ** 2)
        f1 = a * (d * r0 ** (d - 1) - c * (d + 2) * r0 ** (d + 1))
        return solve_ivp(lambda r, y: rhs(r, y[:, None]).ravel(), (r0, 1.0), [f0, f1],
                         method="DOP853", rtol=rtol, atol=rtol * 1e-2, dense_output=dense)

    def miss(a):
        s = shoot(a)
        return s.y[0, -1] - 1.0 if s.status == 0 else 1.0

    lo, hi = 1e-3, 1.0
    while miss(hi) < 0:
        hi *= 2
        if hi > 1e6:
            raise NumericError("shooting bracket not found")
    a = brentq(miss, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    s = shoot(a, dense=True)

    def sol(r):
        r = np.atleast_1d(r)
        out = np.empty((2, len(r)))
        small = r < r0
        c = 1.0 / (4 * (d + 1) * eps ** 2)
        rs = r[small]
        out[0, small] = a * rs ** d * (1 - c * rs ** 2)
        out[1, small] = a * (d * rs ** max(d - 1, 0) - c * (d + 2) * rs ** (d + 1))
        out[:, ~small] = s.sol(r[~small])
        return out
    return RadialProfile(d, eps, 0.0, sol)
