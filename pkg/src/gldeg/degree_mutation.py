"""Constructive maps that change boundary degrees at a controlled energy cost.

Contents, bottom-up:

* the plateau bump ``phi`` and the boundary maps ``Psi_t``/``F_t``;
* Fourier data ``b_k`` (DFT of ``Psi_t``) and the closed form ``c_k`` of ``F_t``;
* the boundary-layer profiles ``f_k`` with their closed-form integrals;
* the chart test function ``psi_t`` and two independent evaluations of
  ``M_lambda`` (exact theta-integration of the Fourier expansion, and tensor
  Gauss quadrature of the assembled function);
* the disk map ``M_{eta,delta}``, the pocket map onto a boundary lens, and
  the single/multiple degree bumps built from them.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property
from typing import Sequence

import numpy as np

from .elliptic import dirichlet_energy, harmonic_extension, l2_norm, solve_all_V
from .energy import (L_eps_chart, M_lambda_chart, energy_GL, gauss_panels)
from .errors import (ConstructionError, ParameterError, ResolutionError, TruncationError)
from .fields import ComplexField, abdeg, c1_norm, loop_degrees, winding_number
from .geometry import AnnulusChart, Mesh, Refinement

# ------------------------------------------------------------------ boundary maps


def bump(theta, delta: float) -> np.ndarray:
    """Even, 2 pi-periodic, 1 on |theta| < delta/2, 0 off |theta| < delta; C^3
    septic smoothstep in between."""
    x = np.abs(np.angle(np.exp(1j * np.asarray(theta, dtype=float))))
    s = np.clip((delta - x) / (delta / 2), 0.0, 1.0)
    return s ** 4 * (35 - 84 * s + 70 * s ** 2 - 20 * s ** 3)


def Psi(theta, t: float, delta: float, force_plateau: bool = False) -> np.ndarray:
    """(e^{-i theta} - a) / (e^{-i theta} a - 1) with a = 1 - t phi(theta)."""
    theta = np.asarray(theta, dtype=float)
    phi = np.ones_like(theta) if force_plateau else bump(theta, delta)
    a = 1 - t * phi
    e = np.exp(-1j * theta)
    return (e - a) / (e * a - 1)


def F(theta, t: float) -> np.ndarray:
    return Psi(theta, t, 1.0, force_plateau=True)


def mobius_boundary(t: float, delta: float):
    """The pair of boundary traces (Psi_t, F_t) as callables of the angle."""
    if not 0 < t < 1:
        raise ParameterError("t must lie in (0, 1)")
    return (lambda th: Psi(th, t, delta)), (lambda th: F(th, t))


def mobius_sequence(z, n: int) -> np.ndarray:
    """M_n(x) = (x - (1 - 1/n)) / ((1 - 1/n) x - 1): degree one, weakly to 1."""
    a = 1 - 1 / n
    z = np.asarray(z)
    return (z - a) / (a * z - 1)


# ------------------------------------------------------------------ Fourier data


@dataclass(frozen=True)
class TestFnParams:
    __test__ = False
    t: float
    delta: float
    eta: float = 0.05
    K: int = 0              # 0 selects max(512, ceil(16/t))

    def __post_init__(self):
        if not 0 < self.t < self.delta < 1:
            raise ParameterError("need 0 < t < delta < 1")

    @property
    def order(self) -> int:
        return self.K if self.K else default_order(self.t)


def default_order(t: float) -> int:
    return int(max(512, np.ceil(16 / t)))


def c_closed(ks: np.ndarray, t: float) -> np.ndarray:
    ks = np.asarray(ks)
    c = np.where(ks >= 0, (t - 2) * (1 - t) ** np.clip(ks, 0, None), 0.0)
    return np.where(ks == -1, 1.0, c)


@dataclass(frozen=True, eq=False)
class FourierData:
    t: float
    ks: np.ndarray
    b: np.ndarray
    c: np.ndarray
    imag_max: float
    tail_fraction: float

    def coeff(self, k: int) -> float:
        return float(self.b[k + len(self.ks) // 2])


def fourier_b(params: TestFnParams, force_plateau: bool = False, oversample: int = 8) -> FourierData:
    """b_k from the DFT of Psi_t: coefficient of e^{-(k+1) i theta} is t b_k for
    k != -1, the constant term is 1 - t b_{-1}."""
    K = params.order
    if K < 64:
        raise TruncationError("K must be at least 64")
    t = params.t
    N = oversample * K
    th = 2 * np.pi * np.arange(N) / N
    hat = np.fft.fft(Psi(th, t, params.delta, force_plateau)) / N  # hat[n]: coefficient of e^{i n theta}
    ks = np.arange(-K, K + 1)
    idx = np.mod(-(ks + 1), N)
    b = hat[idx] / t
    b = np.where(ks == -1, (1 - hat[0]) / t, b)
    imag_max = float(np.max(np.abs(b.imag)))
    if imag_max > 1e-8:
        raise TruncationError(f"coefficients not real (max imag {imag_max:.2e})")
    br = b.real
    top = np.abs(ks) > 0.9 * K
    tail = float(np.sum(br[top] ** 2) / np.sum(br ** 2))
    if tail > 1e-6:
        raise TruncationError(f"spectral tail fraction {tail:.2e} above 1e-6; raise K")
    return FourierData(t, ks, br, c_closed(ks, t), imag_max, tail)


# ------------------------------------------------------------------ profiles


@dataclass(frozen=True)
class ProfileSet:
    """f_k(h) on [1 - delta, 1] with f_k(1 - delta) = 0, f_k(1) = 1 and
    -f'' + alpha_k^2 f = 0, alpha_k = sqrt(k^2 + lam - 1)."""
    lam: float
    delta: float
    K: int

    def __post_init__(self):
        if self.lam < 1:
            raise ParameterError("profiles need lam >= 1")

    def alpha(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        return np.sqrt(k * k + self.lam - 1.0)

    def f(self, k, h) -> tuple[np.ndarray, np.ndarray]:
        """Values and h-derivatives, broadcast over k (rows) and h (columns)."""
        a = np.atleast_1d(self.alpha(k))[:, None]
        x = 1 - np.atleast_1d(np.asarray(h, dtype=float))[None, :]
        dl = self.delta
        with np.errstate(invalid="ignore", divide="ignore"):
            den = -np.expm1(-2 * a * dl)
            e1, e2 = np.exp(-a * x), np.exp(-a * (2 * dl - x))
            f = (e1 - e2) / den
            fp = a * (e1 + e2) / den
        lin = (a == 0)[:, 0]
        if np.any(lin):
            f[lin] = (dl - x[0]) / dl
            fp[lin] = 1 / dl
        return f, fp

    # closed forms
    def phi_closed(self, k) -> np.ndarray:
        """int (f'^2 + alpha^2 f^2) = alpha (1 + 2/(e^{2 alpha delta} - 1))."""
        a = self.alpha(k)
        with np.errstate(invalid="ignore", divide="ignore"):
            v = a * (1 + 2 * np.exp(-2 * a * self.delta) / -np.expm1(-2 * a * self.delta))
        return np.where(a == 0, 1 / self.delta, v)

    def int_f_closed(self, k) -> np.ndarray:
        a = self.alpha(k)
        with np.errstate(invalid="ignore", divide="ignore"):
            v = (1 - 2 / (np.exp(a * self.delta) + 1)) / a
        return np.where(a == 0, self.delta / 2, v)

    def _xy(self, ak, al):
        """The two rational-exponential terms of the cross integrals (ak > al)."""
        dl = self.delta
        E = lambda x: -np.expm1(-2 * x * dl)  # 1 - e^{-2 x delta}
        X = E(ak + al) / ((ak + al) * E(ak) * E(al))
        Y = E(ak - al) * np.exp(-2 * al * dl) / ((ak - al) * E(ak) * E(al))
        return X, Y

    def int_ff_closed(self, k, l) -> float:
        """int f_k f_l for |k| != |l|."""
        ak, al = sorted([float(self.alpha(k)), float(self.alpha(l))], reverse=True)
        X, Y = self._xy(ak, al)
        return float(X - Y)

    def int_fpfp_closed(self, k, l) -> float:
        """int f_k' f_l' for |k| != |l|."""
        ak, al = sorted([float(self.alpha(k)), float(self.alpha(l))], reverse=True)
        X, Y = self._xy(ak, al)
        return float(ak * al * (X + Y))

    def int_ff_diag(self, k) -> float:
        a, dl = float(self.alpha(k)), self.delta
        if a == 0:
            return dl / 3
        # (sinh(2 a delta)/(2a) - delta) / (2 sinh^2(a delta)), written with e^{-2 a delta}
        q = np.exp(-2 * a * dl)
        return float(((1 - q * q) / (2 * a) - 2 * dl * q) / (1 - q) ** 2)

    def int_fpfp_diag(self, k) -> float:
        a, dl = float(self.alpha(k)), self.delta
        if a == 0:
            return 1 / dl
        q = np.exp(-2 * a * dl)
        return float(a * a * ((1 - q * q) / (2 * a) + 2 * dl * q) / (1 - q) ** 2)


def profiles(lam: float, delta: float, K: int) -> ProfileSet:
    return ProfileSet(lam, delta, K)


def h_nodes(delta: float, kmax: int, n: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Gauss nodes on [1 - delta, 1] in panels doubling away from h = 1."""
    br = [0.0]
    s = 0.1 / max(kmax, 1)
    while s < delta:
        br.append(s)
        s *= 2
    br.append(delta)
    x, w = gauss_panels(br, n)
    return 1 - x, w


# ------------------------------------------------------------------ test function


@dataclass(eq=False)
class TestFunction:
    __test__ = False
    """psi_t on the chart rectangle [1 - delta, 1] x [-2 delta, 2 delta]."""
    params: TestFnParams
    fourier: FourierData
    prof: ProfileSet

    @property
    def t(self):
        return self.params.t

    @property
    def delta(self):
        return self.params.delta

    @cached_property
    def _amp(self) -> tuple[np.ndarray, int]:
        """Per-mode amplitude t b_k and modes m = -(k+1)."""
        return self.t * self.fourier.b, -(self.fourier.ks + 1)

    def _coef_rows(self, h):
        """A_k(h), A_k'(h) so that psi = 1 + sum_k A_k(h) e^{i m_k theta} on D'."""
        amp, m = self._amp
        f, fp = self.prof.f(self.fourier.ks, h)
        A = amp[:, None] * f
        Ap = amp[:, None] * fp
        i0 = int(np.flatnonzero(self.fourier.ks == -1)[0])
        A[i0] *= -1
        Ap[i0] *= -1
        return A, Ap, m

    def core(self, h: np.ndarray, theta: np.ndarray):
        """psi, d_h psi, d_theta psi on the tensor grid h x theta inside D'."""
        A, Ap, m = self._coef_rows(h)
        out_p = np.empty((len(h), len(theta)), complex)
        out_h = np.empty_like(out_p)
        out_t = np.empty_like(out_p)
        for j0 in range(0, len(theta), 256):
            th = theta[j0:j0 + 256]
            E = np.exp(1j * np.outer(m, th))
            out_p[:, j0:j0 + 256] = 1 + A.T @ E
            out_h[:, j0:j0 + 256] = Ap.T @ E
            out_t[:, j0:j0 + 256] = A.T @ (1j * m[:, None] * E)
        return out_p, out_h, out_t

    def psi_grid(self, H: np.ndarray, T: np.ndarray):
        """Evaluate on a meshgrid (indexing='ij'): rows share h, columns share theta."""
        h, th = H[:, 0], T[0, :]
        dl = self.delta
        P = np.ones(H.shape, complex)
        Ph = np.zeros_like(P)
        Pt = np.zeros_like(P)
        inside_h = h >= 1 - dl
        hh = h[inside_h]
        mid = np.abs(th) <= dl
        if np.any(mid):
            p, ph, pt = self.core(hh, th[mid])
            P[np.ix_(inside_h, mid)] = p
            Ph[np.ix_(inside_h, mid)] = ph
            Pt[np.ix_(inside_h, mid)] = pt
        for sgn in (1, -1):
            side = (sgn * th > dl) & (sgn * th < 2 * dl)
            if not np.any(side):
                continue
            p0, ph0, _ = self.core(hh, np.array([sgn * dl]))
            s = (2 * dl - sgn * th[side]) / dl          # weight on the interface value
            P[np.ix_(inside_h, side)] = (1 - s)[None] + p0 * s[None]
            Ph[np.ix_(inside_h, side)] = ph0 * s[None]
            Pt[np.ix_(inside_h, side)] = sgn * (1 - p0) / dl * np.ones_like(s)[None]
        return P, Ph, Pt

    def evaluate(self, h: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """psi at scattered chart points."""
        h = np.asarray(h, float)
        th = np.angle(np.exp(1j * np.asarray(theta, float)))
        out = np.ones(h.shape, complex)
        dl = self.delta
        act = (h >= 1 - dl) & (np.abs(th) < 2 * dl)
        if not np.any(act):
            return out
        ha, ta = h[act], th[act]
        tc = np.clip(ta, -dl, dl)       # interface angle for the side regions
        A, _, m = self._coef_rows(ha)
        core = 1 + np.sum(A * np.exp(1j * np.outer(m, tc)), axis=0)
        s = np.where(np.abs(ta) <= dl, 1.0, (2 * dl - np.abs(ta)) / dl)
        out[act] = (1 - s) + s * core
        return out

    def on_mesh(self, mesh: Mesh, chart: AnnulusChart) -> ComplexField:
        z = mesh.z
        h = 1 + chart.d * np.log(np.abs(z))
        th = chart.d * np.angle(z)
        return ComplexField(mesh, self.evaluate(h, th))

    # ------------------------------------------------------------ M_lambda routes

    def M_lambda_coefficients(self, lam: float) -> dict:
        """D' by exact theta-integration of the expansion, D+- by Gauss in theta."""
        dl = self.delta
        h, w = h_nodes(dl, self.params.order)
        A, Ap, m = self._coef_rows(h)
        i0 = int(np.flatnonzero(self.fourier.ks == -1)[0])
        Af = A.copy()
        Af[i0] += 1.0                         # psi = sum_m Af_m e^{i m theta}
        d = m[:, None] - m[None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            S = np.where(d == 0, 2 * dl, 2 * np.sin(d * dl) / np.where(d == 0, 1, d))
        G = (Af * w) @ Af.T
        Gp = (Ap * w) @ Ap.T
        GB = (A * w) @ A.T                    # 1 - psi = -sum_m A_m e^{i m theta}
        mp = m + 1.0
        # |psi_h|^2 + |psi_theta + i psi|^2 - |psi|^2 + lam |1 - psi|^2, each term a
        # bilinear form in the real coefficients against int cos((m - n) theta)
        core = Gp + (np.outer(mp, mp) - 1) * G + lam * GB
        val = 0.5 * np.sum(S * core)
        d_prime = float(val)
        sides = self._sides(lam, h, w)
        return {"D_prime": d_prime, "D_pm": sides, "total": d_prime + sides}

    def _sides(self, lam: float, h, w) -> float:
        dl = self.delta
        xg, wg = np.polynomial.legendre.leggauss(12)
        tot = 0.0
        for sgn in (1, -1):
            p0, ph0, _ = self.core(h, np.array([sgn * dl]))
            p0, ph0 = p0[:, 0], ph0[:, 0]
            at = dl + 0.5 * dl * (xg + 1)
            wt = 0.5 * dl * wg
            s = (2 * dl - at) / dl
            P = (1 - s)[None] + s[None] * p0[:, None]
            Ph = s[None] * ph0[:, None]
            Pt = sgn * (1 - p0[:, None]) / dl * np.ones_like(s)[None]
            f = np.abs(Ph) ** 2 + np.abs(Pt + 1j * P) ** 2 - np.abs(P) ** 2 + lam * np.abs(1 - P) ** 2
            tot += 0.5 * float(w @ f @ wt)
        return tot

    def theta_nodes(self, panels_per_unit: float | None = None, n: int = 16):
        """Gauss nodes on [-2 delta, 2 delta] resolving modes up to the truncation order."""
        dl, K = self.delta, self.params.order
        npan = max(16, int(np.ceil(K * dl / 6)))
        core = np.linspace(-dl, dl, 2 * npan + 1)
        br = np.concatenate([core, [1.5 * dl, 2 * dl], [-1.5 * dl, -2 * dl]])
        br = np.unique(br)
        return gauss_panels(br, n)

    def M_lambda_quadrature(self, lam: float, clamped: bool = False) -> float:
        h, hw = h_nodes(self.delta, self.params.order)
        th, tw = self.theta_nodes()
        fn = self.psi_grid if not clamped else clamp_chart(self.psi_grid)
        return M_lambda_chart(fn, lam, h, hw, th, tw)

    def L_eps_quadrature(self, eps: float, d: int = 1, clamped: bool = True) -> float:
        h, hw = h_nodes(self.delta, self.params.order)
        th, tw = self.theta_nodes()
        fn = self.psi_grid if not clamped else clamp_chart(self.psi_grid)
        return L_eps_chart(fn, eps, d, h, hw, th, tw)

    def max_modulus(self) -> float:
        h, _ = h_nodes(self.delta, self.params.order, n=8)
        th, _ = self.theta_nodes(n=8)
        H, T = np.meshgrid(h, th, indexing="ij")
        return float(np.max(np.abs(self.psi_grid(H, T)[0])))

    def outer_trace(self, n: int = 1 << 15) -> np.ndarray:
        th = -np.pi + 2 * np.pi * np.arange(n) / n
        return self.evaluate(np.ones(n), th)


def assemble_psi(params: TestFnParams, fourier: FourierData | None = None,
                 prof: ProfileSet | None = None, lam: float = 10.0) -> TestFunction:
    fourier = fourier if fourier is not None else fourier_b(params)
    prof = prof if prof is not None else profiles(lam, params.delta, params.order)
    return TestFunction(params, fourier, prof)


# ------------------------------------------------------------------ clamp


def clamp(w):
    """w min(|w|, 2)/|w| pointwise."""
    if isinstance(w, ComplexField):
        return ComplexField(w.mesh, clamp(w.values))
    w = np.asarray(w, dtype=complex)
    a = np.abs(w)
    with np.errstate(over="ignore", divide="ignore"):
        scale = np.where(a > 2, 2 / np.where(a > 2, a, 1), 1.0)
    return w * scale


def clamp_chart(fn):
    """Clamp a chart function together with its first derivatives."""
    def g(H, T):
        P, Ph, Pt = fn(H, T)
        a = np.abs(P)
        big = a > 2
        if not np.any(big):
            return P, Ph, Pt
        P, Ph, Pt = P.copy(), Ph.copy(), Pt.copy()
        e = P[big] / a[big]
        for D in (Ph, Pt):
            dv = D[big]
            # d(2 e) = 2 (dv - e Re(conj(e) dv)) / |P|
            D[big] = 2 * (dv - e * np.real(np.conj(e) * dv)) / a[big]
        P[big] = 2 * e
        return P, Ph, Pt
    return g


# ------------------------------------------------------------------ test-function report


@dataclass
class TestFnReport:
    __test__ = False
    t: float
    delta: float
    eps: float
    lam: float
    K: int
    M_lambda: float              # coefficient route, raw psi
    M_lambda_quadrature: float   # tensor quadrature, raw psi
    M_lambda_clamped: float
    L_eps: float                 # clamped psi
    bound: float                 # delta - 2 delta t + 4 t^2 S(delta, t)
    pi_margin: float
    max_modulus: float
    deg_outer_psi: int
    deg_outer_shift: int
    deg_hole_shift: int

    @property
    def chain_ok(self) -> bool:
        tol = 1e-9 * max(1.0, abs(self.M_lambda))
        return self.L_eps <= self.M_lambda_clamped + tol and self.M_lambda_clamped <= self.M_lambda_quadrature + tol

    def csv_row(self) -> str:
        return (f"{self.t:.6g},{self.M_lambda:.12e},{self.bound:.12e},{self.pi_margin:.12e},"
                f"{self.deg_outer_psi}")


def verify_testfn(chart: AnnulusChart, params: TestFnParams, eps: float, lam: float | None = None,
                  n_trace: int = 1 << 15) -> TestFnReport:
    from .series_oracle import S_direct
    lam_min = 9.0 / (2 * eps ** 2 * chart.d ** 2)   # inf |grad theta|^2 = d^2 on |z| <= 1
    lam = lam_min if lam is None else lam
    if lam < lam_min * (1 - 1e-12):
        raise ParameterError(f"lam = {lam} below 9/(2 eps^2 inf|grad theta|^2) = {lam_min}")
    if params.delta >= np.pi / 2:
        raise ParameterError("chart half-width too large")
    tf = assemble_psi(params, lam=lam)
    coef = tf.M_lambda_coefficients(lam)["total"]
    quad = tf.M_lambda_quadrature(lam)
    quad_c = tf.M_lambda_quadrature(lam, clamped=True)
    Le = tf.L_eps_quadrature(eps, chart.d, clamped=True)
    t, dl = params.t, params.delta
    bound = dl - 2 * dl * t + 4 * t * t * S_direct(dl, t)
    # degrees along densely sampled loops
    th = -np.pi + 2 * np.pi * np.arange(n_trace) / n_trace
    z_out = np.exp(1j * th)
    z_in = chart.inner_radius * z_out
    u0 = lambda z: (z / np.abs(z)) ** chart.d
    psi_out = tf.evaluate(np.ones(n_trace), chart.d * th)
    psi_in = tf.evaluate(1 + chart.d * np.log(np.abs(z_in)), chart.d * th)
    deg_psi = int(np.rint(winding_number(psi_out)))
    shift_out = int(np.rint(winding_number(clamp(psi_out) * u0(z_out)) - winding_number(u0(z_out))))
    shift_in = int(np.rint(winding_number(clamp(psi_in) * u0(z_in)) - winding_number(u0(z_in))))
    return TestFnReport(t, dl, eps, lam, params.order, coef, quad, quad_c, Le, bound,
                        float(np.pi - coef), tf.max_modulus(), deg_psi, shift_out, shift_in)


# ------------------------------------------------------------------ M_{eta,delta}


def disk_series(fd: FourierData, z: np.ndarray) -> np.ndarray:
    """Harmonic extension of the e^{i theta}-oriented trace:
    (1 - t b_{-1}) + t sum_{k != -1} b_k r^{|k+1|} e^{i (k+1) theta}."""
    t = fd.t
    ks, b = fd.ks, fd.b
    pos = ks >= 0                       # powers z^{k+1}
    neg = ks <= -2                      # powers conj(z)^{-(k+1)}
    cp = np.zeros(ks.max() + 2)
    cp[ks[pos] + 1] = t * b[pos]
    cn = np.zeros(-ks.min())
    cn[-(ks[neg] + 1)] = t * b[neg]
    z = np.asarray(z, complex)
    out = (1 - t * fd.coeff(-1)) + np.polynomial.polynomial.polyval(z, cp)
    if len(cn):
        out = out + np.polynomial.polynomial.polyval(np.conj(z), cn)
    return out


def disk_trace(theta, t: float, delta: float) -> np.ndarray:
    """(e^{i theta} - a)/(e^{i theta} a - 1), a = 1 - t phi(theta): degree +1."""
    return Psi(-np.asarray(theta, float), t, delta)


def spectral_energy(fd: FourierData) -> float:
    """1/2 int |grad M|^2 = pi t^2 sum |k+1| b_k^2 for the exact harmonic extension."""
    return float(np.pi * fd.t ** 2 * np.sum(np.abs(fd.ks + 1) * fd.b ** 2))


def energy_curve(ts: Sequence[float], delta: float) -> np.ndarray:
    return np.array([spectral_energy(fourier_b(TestFnParams(t, delta))) for t in ts])


@dataclass(eq=False)
class MEtaDelta:
    eta: float
    delta: float
    t: float
    fourier: FourierData
    energy: float                       # exact extension of the truncated series
    field: ComplexField | None = None
    fem_energy: float = float("nan")    # discrete harmonic extension on the mesh
    history: list = dc_field(default_factory=list)

    def __call__(self, z):
        z = np.asarray(z, complex)
        out = disk_series(self.fourier, z)
        on = np.abs(z) >= 1 - 1e-12
        if np.any(on):
            out = np.where(on, disk_trace(np.angle(z), self.t, self.delta), out)
        return out


def build_M_eta_delta(eta: float, delta: float, mesh: Mesh | None = None,
                      t_min: float = 1e-3, iters: int = 40) -> MEtaDelta:
    """Degree-one disk map, equal to 1 off the delta-arc, energy <= pi + eta."""
    if not (0 < eta and 0 < delta < 1):
        raise ParameterError("need eta > 0 and 0 < delta < 1")
    target = np.pi + eta
    hist = []

    def E(t):
        fd = fourier_b(TestFnParams(t, delta))
        e = spectral_energy(fd)
        hist.append((t, e))
        return e, fd

    lo, hi = t_min, 0.999 * delta
    e_lo, fd_lo = E(lo)
    if e_lo > target:
        raise ConstructionError(f"energy {e_lo:.6f} at t = {lo} already above pi + eta; curve {hist}")
    e_hi, fd_hi = E(hi)
    if e_hi <= target:
        lo, e_lo, fd_lo = hi, e_hi, fd_hi
    else:
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            e_mid, fd_mid = E(mid)
            if e_mid <= target:
                lo, e_lo, fd_lo = mid, e_mid, fd_mid
            else:
                hi = mid
            if hi - lo < 1e-4 * lo:
                break
    M = MEtaDelta(eta, delta, lo, fd_lo, e_lo, history=hist)
    if mesh is not None:
        vals = M(mesh.z)
        bm = mesh.boundary_mask
        vals[bm] = disk_trace(np.angle(mesh.z[bm]), lo, delta)
        M.field = ComplexField(mesh, vals)
        ext = harmonic_extension(mesh, vals)
        M.fem_energy = dirichlet_energy(mesh, ext.values)
    return M


# ------------------------------------------------------------------ pocket map


@dataclass(frozen=True)
class Pocket:
    """Lens D cap B(x0, s) at a boundary point, with a conformal map onto the disk."""
    x0: complex
    s: float
    loop: int
    circle_c: complex
    circle_r: float
    p1: complex
    p2: complex
    rot: complex
    power: float
    scale: float
    area: float

    def contains(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z)
        inb = np.abs(z - self.x0) < self.s
        d = np.abs(z - self.circle_c) - self.circle_r
        tol = 1e-9 * self.circle_r
        side = d <= tol if self.loop == 0 else d >= -tol
        return inb & side

    def to_disk(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, complex)
        m = (z - self.p1) / (z - self.p2) * self.rot
        # branch cut in the middle of the exterior wedge, away from both arcs
        cut = np.pi - 0.5 * np.pi / self.power
        ang = np.mod(np.angle(m) + cut, 2 * np.pi) - cut
        w = np.abs(m) ** self.power * np.exp(1j * self.power * ang)
        w = w / self.scale
        return 1j * (w - 1j) / (w + 1j)


def _lens_area(R: float, s: float, outer: bool) -> float:
    """Area of B(x0, s) cap {inside (outer) / outside (hole) circle of radius R}, x0 on that circle."""
    # intersection of two disks, radii R and s, centers at distance R
    d = R
    a1 = R * R * np.arccos((d * d + R * R - s * s) / (2 * d * R))
    a2 = s * s * np.arccos((d * d + s * s - R * R) / (2 * d * s))
    a3 = 0.5 * np.sqrt((-d + R + s) * (d + R - s) * (d - R + s) * (d + R + s))
    inter = a1 + a2 - a3
    return inter if outer else np.pi * s * s - inter


def make_pocket(domain, loop: int, angle: float, area: float) -> Pocket:
    """Pocket at angle ``angle`` on boundary loop ``loop`` with area <= ``area``.

    ``domain`` is a Mesh or a DomainSpec.
    """
    spec = domain.spec if isinstance(domain, Mesh) else domain
    circ = spec.circles[loop]
    c = complex(*circ.center)
    R = circ.radius
    x0 = c + R * np.exp(1j * angle)
    outer = loop == 0
    s = _pocket_radius(R, area, outer)
    for j, other in enumerate(spec.circles):
        if j == loop:
            continue
        gap = abs(abs(x0 - complex(*other.center)) - other.radius)
        if gap < 1.5 * s:
            raise ConstructionError(f"pocket of radius {s:.3g} on loop {loop} too close to loop {j}")
    # corners: intersections of |z - c| = R and |z - x0| = s
    half = 2 * np.arcsin(s / (2 * R))
    q1 = c + R * np.exp(1j * (angle - half))
    q2 = c + R * np.exp(1j * (angle + half))
    nrm = np.exp(1j * angle) * (-1 if outer else 1)       # inward normal into D
    inner = x0 + 0.5 * s * nrm
    onB = x0 + s * nrm                                      # on the interior arc
    for p1, p2 in ((q1, q2), (q2, q1)):
        m = lambda z: (z - p1) / (z - p2)
        rot = np.exp(-1j * np.angle(m(x0)))
        bB = np.mod(np.angle(m(onB) * rot), 2 * np.pi)
        bI = np.mod(np.angle(m(inner) * rot), 2 * np.pi)
        if 0 < bI < bB:
            power = np.pi / bB
            scale = np.abs(m(x0)) ** power
            return Pocket(x0, s, loop, c, R, p1, p2, rot, power, scale, _lens_area(R, s, outer))
    raise ConstructionError("pocket wedge orientation not found")


def _pocket_radius(R: float, area: float, outer: bool) -> float:
    lo, hi = 1e-9, min(R, 0.5)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if _lens_area(R, mid, outer) <= area:
            lo = mid
        else:
            hi = mid
    return lo


def concentration_scale(pk: Pocket, t: float) -> float:
    """Physical size t / |Phi'(x0)| of the region where the bump departs from 1."""
    dz = 1e-6 * pk.s
    inward = (pk.circle_c - pk.x0) / pk.circle_r * (1 if pk.loop == 0 else -1)
    d = abs(pk.to_disk(pk.x0 + dz * inward) - pk.to_disk(pk.x0)) / dz
    return t / d


def required_edge_length(eta: float, delta: float, spec, sites, cells: float = 6.0) -> list[float]:
    """Edge length resolving the bump concentration scale by ``cells`` elements."""
    t = build_M_eta_delta(eta * eta, delta).t
    return [concentration_scale(make_pocket(spec, loop, ang, eta * eta), t) / cells
            for loop, ang in sites]


def pocket_refinements(spec, sites: Sequence[tuple[int, float]], eta: float,
                       delta: float = 0.5, cells: float = 6.0, grade: float = 0.1) -> list[Refinement]:
    """Refinement records resolving the bump at each (loop, angle) site."""
    hreq = required_edge_length(eta, delta, spec, sites, cells)
    out = []
    for (loop, ang), h in zip(sites, hreq):
        circ = spec.circles[loop]
        x = circ.center[0] + circ.radius * np.cos(ang), circ.center[1] + circ.radius * np.sin(ang)
        out.append(Refinement((float(x[0]), float(x[1])), float(h), grade))
    return out


# ------------------------------------------------------------------ degree bumps


@dataclass
class BumpReport:
    field: ComplexField
    loop: int
    sign: int
    eta: float
    t: float
    pocket: Pocket
    degrees_before: tuple[int, ...]
    degrees_after: tuple[int, ...]
    energy_before: float
    energy_after: float
    l2_drift: float

    @property
    def extra_energy(self) -> float:
        return self.energy_after - self.energy_before


def bump_degree(u: ComplexField, loop: int, sign: int, eta: float, eps: float,
                angle: float = 0.0, delta: float = 0.5, cells: float = 3.0) -> BumpReport:
    """Multiply u by M_{eta^2,delta} (or its conjugate) carried onto a boundary
    pocket of area <= eta^2, shifting the degree of ``loop`` by ``sign``."""
    if sign not in (1, -1):
        raise ParameterError("sign must be +1 or -1")
    mesh = u.mesh
    pk = make_pocket(mesh, loop, angle, eta * eta)
    M = build_M_eta_delta(eta * eta, delta)
    inside = pk.contains(mesh.z)
    # resolution: edges inside the concentration disk against its scale
    scale = concentration_scale(pk, M.t)
    need = scale / cells
    ez = mesh.z[mesh.edges]
    emask = np.any(np.abs(ez - pk.x0) < scale, axis=1)
    if not np.any(emask):
        raise ResolutionError("no mesh edge inside the bump concentration disk")
    hloc = float(np.max(np.abs(ez[emask, 0] - ez[emask, 1])))
    if hloc > 2 * need:
        raise ResolutionError(f"local edge length {hloc:.2e} above {2 * need:.2e} needed by the bump")
    before = loop_degrees(u)
    best = None
    for conj in (False, True):
        N = np.ones(mesh.n_vertices, complex)
        zz = pk.to_disk(mesh.z[inside])
        val = M(zz)
        N[inside] = np.conj(val) if conj else val
        bm = inside & mesh.boundary_mask & (mesh.vertex_kind == loop)
        # exact unimodular trace on the boundary arc
        ang = np.angle(pk.to_disk(mesh.z[bm]))
        tr = disk_trace(ang, M.t, delta)
        N[bm] = np.conj(tr) if conj else tr
        v = ComplexField(mesh, u.values * N)
        after = loop_degrees(v)
        if after[loop] - before[loop] == sign:
            best = (v, after)
            break
    if best is None:
        raise ResolutionError("bump did not move the loop degree by the requested sign")
    v, after = best
    e0 = energy_GL(u, eps).total
    e1 = energy_GL(v, eps).total
    drift = l2_norm(mesh, u.values - v.values)
    return BumpReport(v, loop, sign, eta, M.t, pk, before, after, e0, e1, drift)


def mutation_sites(shifts: Sequence[int]) -> dict[int, list[float]]:
    """Default bump angles: |shift| equally spaced points per loop, starting at angle 0."""
    return {k: [2 * np.pi * j / abs(s) for j in range(abs(s))] for k, s in enumerate(shifts) if s}


def mutation_refinements(spec, shifts: Sequence[int], eta: float, delta: float = 0.5,
                         cells: float = 6.0, grade: float = 0.1) -> list[Refinement]:
    """Refinement records for every default site of ``mutate_degrees``."""
    l1 = sum(abs(int(x)) for x in shifts)
    sites = [(k, a) for k, angs in mutation_sites(shifts).items() for a in angs]
    return pocket_refinements(spec, sites, eta / max(l1, 1), delta, cells, grade)


@dataclass
class MutationReport:
    field: ComplexField
    steps: list
    degrees_before: tuple[int, ...]
    degrees_after: tuple[int, ...]
    energy_before: float
    energy_after: float
    l2_drift: float
    abdeg_before: np.ndarray
    abdeg_after: np.ndarray
    lipschitz_bound: np.ndarray

    @property
    def extra_energy(self) -> float:
        return self.energy_after - self.energy_before


def mutate_degrees(u: ComplexField, shifts: Sequence[int], eta: float, eps: float,
                   sites: dict | None = None, delta: float = 0.5) -> MutationReport:
    """Shift the degree of loop k by ``shifts[k]`` (loop 0 outer) through
    sum |shifts| successive bumps, each with slack eta / l1."""
    mesh = u.mesh
    shifts = [int(s) for s in shifts]
    if len(shifts) != len(mesh.boundary_loops):
        raise ParameterError("one shift per boundary loop required")
    l1 = sum(abs(s) for s in shifts)
    V = solve_all_V(mesh)
    ab0 = abdeg(u, V)
    e0 = energy_GL(u, eps).total
    deg0 = loop_degrees(u)
    if l1 == 0:
        return MutationReport(u, [], deg0, deg0, e0, e0, 0.0, ab0, ab0, np.zeros_like(ab0))
    mu = eta / l1
    sites = sites or mutation_sites(shifts)
    steps = []
    v = u
    for k, s in enumerate(shifts):
        for ang in sites.get(k, [])[:abs(s)]:
            rep = bump_degree(v, k, int(np.sign(s)), mu, eps, angle=ang, delta=delta)
            steps.append(rep)
            v = rep.field
    if len(steps) != l1:
        raise ParameterError("fewer bump sites than requested degree shifts")
    ab1 = abdeg(v, V)
    e1 = energy_GL(v, eps).total
    drift = l2_norm(mesh, u.values - v.values)
    lam = max(e0, e1)
    bound = np.array([2 / np.pi * c1_norm(Vi) * np.sqrt(lam) * drift for Vi in V])
    return MutationReport(v, steps, deg0, loop_degrees(v), e0, e1, drift, ab0, ab1, bound)
