"""Brute-force checks of the power-series identities, the boundary-layer
profile estimates and the double sum S(delta, t).

Every check returns a :class:`SeriesCheck`. Exact identities pass when the
partial sum is within its truncation bound (+1e-10) of the closed form;
asymptotic estimates pass when the fitted constant stays within 50% as the
index ladder doubles.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .degree_mutation import ProfileSet, c_closed, h_nodes
from .errors import ParameterError, TruncationError

ABS_TOL = 1e-10


@dataclass(frozen=True)
class SeriesCheck:
    tag: str
    params: dict
    partial: float
    closed: float
    bound: float
    passed: bool = field(init=False)

    def __post_init__(self):
        ok = bool(abs(self.partial - self.closed) <= self.bound + ABS_TOL)
        object.__setattr__(self, "passed", ok)

    @property
    def error(self) -> float:
        return abs(self.partial - self.closed)

    def csv_row(self) -> str:
        p = ";".join(f"{k}={v}" for k, v in self.params.items())
        return (f"{self.tag},{p},{self.partial:.15e},{self.closed:.15e},{self.bound:.3e},"
                f"{int(self.passed)}")


CSV_HEADER = "tag,params,partial,closed,bound,pass"


# ------------------------------------------------------------------ power series


def _geo_tail(x: float, K: int, power: int = 0) -> float:
    """Upper bound for sum_{k>K} k^power x^k, x in [0, 1)."""
    if x == 0:
        return 0.0
    q = x ** (K + 1)
    if power == 0:
        return q / (1 - x)
    if power == 1:
        return q * ((K + 1) / (1 - x) + x / (1 - x) ** 2)
    raise ValueError(power)


def _sum(terms: np.ndarray) -> float:
    return float(np.sum(terms))           # numpy uses pairwise summation


def _F_sin_double(X: float, delta: float) -> float:
    s, c = np.sin(delta), np.cos(delta)
    return (X + c) / (4 * (1 - X * X) * s) - np.arctan((X - c) / s) / (4 * s * s)


def _series_sin_double(X: float, delta: float, K: int) -> float:
    """sum_{n,l>0, n+2l<=K} sin(n delta) l/(n+2l) X^{n+2l}, grouped by m = n + 2l."""
    m = np.arange(3, K + 1)
    L = (m - 1) // 2
    l = np.arange(1, (K - 1) // 2 + 1)
    cum = np.concatenate([[0.0], np.cumsum(l * np.exp(-2j * l * delta))])
    a = np.imag(np.exp(1j * m * delta) * cum[L]) / m      # sum_l l sin((m - 2l) delta) / m
    return _sum(a * X ** m)


def check_power_identity(tag: str, X: float, delta: float = 0.5, K: int = 1000,
                         X_ref: float = 0.0) -> SeriesCheck:
    """K-term partial sum of a classical power series against its closed form."""
    if not abs(X) < 1:
        raise ParameterError("|X| < 1 required")
    if K < 1000:
        raise ParameterError("K >= 1000 required")
    k = np.arange(1, K + 1)
    ax = abs(X)
    params = {"X": X, "delta": delta, "K": K}
    if tag == "log_series":
        return SeriesCheck(tag, params, _sum(ax ** k / k), -np.log1p(-ax), _geo_tail(ax, K) / (K + 1))
    if tag == "geometric":
        k0 = np.arange(0, K + 1)
        return SeriesCheck(tag, params, _sum(X ** k0), 1 / (1 - X), _geo_tail(ax, K))
    if tag == "k_geometric":
        return SeriesCheck(tag, params, _sum(k * X ** k), X / (1 - X) ** 2, _geo_tail(ax, K, 1))
    if tag == "sin_geometric":
        closed = X * np.sin(delta) / (1 - 2 * X * np.cos(delta) + X * X)
        return SeriesCheck(tag, params, _sum(np.sin(k * delta) * X ** k), closed, _geo_tail(ax, K))
    if tag == "sin_over_k":
        s, c = np.sin(delta), np.cos(delta)
        closed = np.arctan((X - c) / s) + np.arctan(c / s)
        return SeriesCheck(tag, params, _sum(np.sin(k * delta) / k * X ** k), closed,
                           _geo_tail(ax, K) / (K + 1))
    if tag == "sin_double":
        # the additive constant cancels in f(X) - f(X_ref)
        params["X_ref"] = X_ref
        part = _series_sin_double(X, delta, K) - _series_sin_double(X_ref, delta, K)
        closed = _F_sin_double(X, delta) - _F_sin_double(X_ref, delta)
        # |coefficient of X^m| <= m/8
        bound = (_geo_tail(ax, K, 1) + _geo_tail(abs(X_ref), K, 1)) / 8
        return SeriesCheck(tag, params, part, closed, bound)
    raise ParameterError(f"unknown identity {tag}")


POWER_TAGS = ("log_series", "geometric", "k_geometric", "sin_geometric", "sin_over_k", "sin_double")


def power_identity_suite(Xs: Sequence[float] = (0.3, 0.9), deltas: Sequence[float] = (0.3, 0.7),
                         K: int = 2000) -> list[SeriesCheck]:
    return [check_power_identity(tag, X, d, K) for tag in POWER_TAGS for X in Xs for d in deltas]


# ------------------------------------------------------------------ S(delta, t)


def _order_for(t: float) -> int:
    return int(np.ceil(np.log(1e-12) / np.log1p(-t)))


def S_direct(delta: float, t: float, K: int | None = None) -> float:
    """sum_{k>l>0} c_k c_l sin((k - l) delta)/(k - l) * k l/(k + l), summed directly."""
    if not 0 < t < 1:
        raise ParameterError("t must lie in (0, 1)")
    need = _order_for(t)
    if K is None:
        K = need
    elif (1 - t) ** K >= 1e-12:
        raise TruncationError(f"K = {K} leaves (1-t)^K = {(1 - t) ** K:.2e}; need K >= {need}")
    k = np.arange(1, K + 1)
    c = c_closed(k, t)
    total = 0.0
    for i0 in range(1, K, 512):
        kk = k[i0:i0 + 512][:, None]           # rows k, columns l < k
        ll = k[None, :i0 + 512]
        n = kk - ll
        with np.errstate(invalid="ignore", divide="ignore"):
            term = np.where(n > 0, np.sin(n * delta) / np.where(n > 0, n, 1) * kk * ll / (kk + ll), 0.0)
        total += float(np.sum(c[i0:i0 + 512, None] * c[None, :i0 + 512] * term))
    return total


def S_closed(delta: float, t: float) -> float:
    """Leading part of S(delta, t) without its O(1) remainder."""
    s, c = np.sin(delta), np.cos(delta)
    return ((1 - t) ** 2 / (2 * t * t) * (np.arctan((1 - t - c) / s) + np.arctan(c / s))
            + (1 - t + c) * (2 - t) / (8 * t * s))


@dataclass(frozen=True)
class SReport:
    delta: float
    ts: tuple[float, ...]
    direct: tuple[float, ...]
    closed: tuple[float, ...]
    remainder: tuple[float, ...]          # S_direct - S_closed
    excess: tuple[float, ...]             # 4 t^2 S_direct - (pi - delta)
    C_fit: float                          # max excess / t

    @property
    def remainder_bounded(self) -> bool:
        """O(1): the remainder does not grow by more than 50% as t decreases."""
        r = np.abs(self.remainder)
        return bool(r[-1] <= 1.5 * max(r[0], 1.0))

    @property
    def excess_ok(self) -> bool:
        return bool(np.all(np.asarray(self.excess) <= self.C_fit * np.asarray(self.ts) + 1e-12))


def check_S(delta: float, ts: Sequence[float] = (0.1, 0.05, 0.02)) -> SReport:
    d = [S_direct(delta, t) for t in ts]
    c = [S_closed(delta, t) for t in ts]
    ex = [4 * t * t * sd - (np.pi - delta) for t, sd in zip(ts, d)]
    C = max(0.0, max(e / t for e, t in zip(ex, ts)))
    return SReport(delta, tuple(ts), tuple(d), tuple(c), tuple(a - b for a, b in zip(d, c)),
                   tuple(ex), C)


# ------------------------------------------------------------------ profile closed forms


def _quad(prof: ProfileSet, fn: Callable, kmax: int) -> float:
    h, w = h_nodes(prof.delta, max(kmax, 1), n=20)
    return float(w @ fn(h))


def _vals(prof: ProfileSet, k: int, h):
    f, fp = prof.f([k], h)
    return f[0], fp[0]


def check_profile_closed_forms(lam: float = 10.0, delta: float = 0.4,
                               ks: Sequence[int] = (0, 1, 2, 4, 7),
                               ls: Sequence[int] = (-3, -1, 2, 5, 9),
                               rtol: float = 1e-8) -> list[SeriesCheck]:
    """Closed-form profile integrals against Gauss quadrature of the profiles."""
    P = ProfileSet(lam, delta, max(map(abs, [*ks, *ls])))
    out = []
    for k in sorted(set(ks) | set(ls)):
        a = float(P.alpha(k))
        q = _quad(P, lambda h: _vals(P, k, h)[1] ** 2 + a * a * _vals(P, k, h)[0] ** 2, abs(k))
        cl = float(P.phi_closed(k))
        out.append(SeriesCheck("phi_closed", {"k": k, "lam": lam, "delta": delta}, q, cl, rtol * abs(cl)))
        q = _quad(P, lambda h: _vals(P, k, h)[0], abs(k))
        cl = float(P.int_f_closed(k))
        out.append(SeriesCheck("int_f_closed", {"k": k, "lam": lam, "delta": delta}, q, cl, rtol * abs(cl)))
    for k in ks:
        for l in ls:
            km = max(abs(k), abs(l))
            qff = _quad(P, lambda h: _vals(P, k, h)[0] * _vals(P, l, h)[0], km)
            qpp = _quad(P, lambda h: _vals(P, k, h)[1] * _vals(P, l, h)[1], km)
            if abs(k) != abs(l):
                cff, cpp = P.int_ff_closed(k, l), P.int_fpfp_closed(k, l)
                t3, t4 = "cross_ff_closed", "cross_fpfp_closed"
            else:
                cff, cpp = P.int_ff_diag(k), P.int_fpfp_diag(k)
                t3, t4 = "cross_ff_diag_closed", "cross_fpfp_diag_closed"
            pr = {"k": k, "l": l, "lam": lam, "delta": delta}
            out.append(SeriesCheck(t3, pr, qff, cff, rtol * abs(cff)))
            out.append(SeriesCheck(t4, pr, qpp, cpp, rtol * abs(cpp)))
    return out


# ------------------------------------------------------------------ asymptotic estimates


@dataclass(frozen=True)
class EstimateFit:
    tag: str
    C_half: float             # fitted constant over the ladder up to kmax / 2
    C_full: float             # ... and up to kmax
    samples: int

    @property
    def drift(self) -> float:
        return abs(self.C_full - self.C_half) / self.C_half if self.C_half > 0 else 0.0

    @property
    def passed(self) -> bool:
        return np.isfinite(self.C_full) and self.drift < 0.5

    def as_check(self) -> SeriesCheck:
        """Stability as a SeriesCheck: |C_full - C_half| within 0.5 C_half."""
        return SeriesCheck(self.tag, {"samples": self.samples}, self.C_full, self.C_half,
                           0.5 * self.C_half - ABS_TOL if self.C_half > 0 else 0.0)


def _Xkl(P: ProfileSet, k: int, l: int) -> tuple[float, float]:
    """X_{k,l}, Y_{k,l} for k > l >= 0."""
    ak, al = float(P.alpha(k)), float(P.alpha(l))
    dl = P.delta
    E = lambda x: -np.expm1(-2 * x * dl)
    num = ak * al + k * l + P.lam - 1
    X = num * E(ak + al) / ((ak + al) * E(ak) * E(al))
    # (e^{2 al delta} - 1) = e^{2 al delta} E(al)
    Y = num * E(ak - al) * np.exp(-2 * al * dl) / ((ak - al) * E(ak) * E(al))
    return X, Y


def estimate_values(k: int, l: int | None, lam: float, delta: float) -> dict[str, float]:
    """Normalized quantities that each estimate asserts to be bounded."""
    P = ProfileSet(lam, delta, max(abs(k), abs(l or 0)))
    out = {}
    ak = float(P.alpha(k))
    out["alpha_gap"] = abs(ak - abs(k)) * (abs(k) + 1)
    hs = np.concatenate([np.linspace(1 - delta, 1, 2001), 1 - np.geomspace(1e-6, delta, 400)])
    f, fp = _vals(P, k, hs)
    if k != 0:
        e = np.exp(-abs(k) * (1 - hs))
        out["profile_shape"] = float(np.max(np.abs(f - e))) * k * k
        out["profile_slope"] = float(np.max(np.abs(fp - abs(k) * e))) * abs(k)
    km = max(abs(k), abs(l or 0))
    a9 = _quad(P, lambda h: _vals(P, k, h)[1] ** 2 - ak * ak * _vals(P, k, h)[0] ** 2, km)
    b9 = _quad(P, lambda h: _vals(P, k, h)[1] ** 2 - k * k * _vals(P, k, h)[0] ** 2, km)
    out["excess_lower"] = a9                          # >= 0
    out["excess_order"] = b9 - a9                     # >= 0
    out["profile_excess"] = b9 * (abs(k) + 1)
    if l is not None and abs(k) != abs(l):
        out["cross_ff"] = abs(_quad(P, lambda h: _vals(P, k, h)[0] * _vals(P, l, h)[0], km)) * km
        out["cross_fpfp"] = abs(_quad(P, lambda h: _vals(P, k, h)[1] * _vals(P, l, h)[1], km)) / (min(abs(k), abs(l)) + 1)
        if k > l >= 0:
            X, Y = _Xkl(P, k, l)
            out["X_asymptote"] = abs(X - 2 * k * l / (k + l)) * (l + 1)
            out["Y_decay"] = Y * np.exp(delta * l)
    return out


DYADIC = (0, 1, 2, 3, 5, 10, 20, 40, 80, 160)


def check_fk_estimates(k: int, l: int | None = None, lam: float = 10.0,
                       delta: float = 0.4) -> list[SeriesCheck]:
    """Sign conditions and the closed form of the lower bound of the profile excess at one (k, l)."""
    v = estimate_values(k, l, lam, delta)
    P = ProfileSet(lam, delta, abs(k))
    a = float(P.alpha(k))
    closed = 4 * delta * a * a / ((-np.expm1(-2 * a * delta)) * np.expm1(2 * a * delta))
    pr = {"k": k, "lam": lam, "delta": delta}
    out = [SeriesCheck("excess_lower_closed", pr, v["excess_lower"], closed, 1e-9 * max(closed, 1e-300)),
           SeriesCheck("excess_sign", pr, min(v["excess_lower"], 0.0) + min(v["excess_order"], 0.0), 0.0, 1e-12)]
    if lam == 1:
        out.append(SeriesCheck("alpha_exact", pr, a, float(abs(k)), 0.0))
    return out


def fit_estimates(lam: float = 10.0, delta: float = 0.4, kmax: int = 160,
                  ladder: Iterable[int] = DYADIC) -> dict[str, EstimateFit]:
    """Fitted constants (max of the normalized quantity) over the ladder truncated
    at kmax/2 and at kmax."""
    ladder = sorted(set(int(k) for k in ladder if abs(k) <= kmax))
    singles = {}
    for k in range(-kmax, kmax + 1):
        singles[k] = estimate_values(k, None, lam, delta)
    pairs = {}
    for k in ladder:
        for l in ladder:
            if k != l:
                for sk in (1, -1):
                    kk = sk * k
                    if abs(kk) != abs(l):
                        pairs[(kk, l)] = estimate_values(kk, l, lam, delta)
    out = {}
    tags_single = ("alpha_gap", "profile_shape", "profile_slope", "profile_excess")
    tags_pair = ("cross_ff", "cross_fpfp", "X_asymptote", "Y_decay")
    for tag in tags_single + tags_pair:
        src = singles if tag in tags_single else pairs
        key_max = (lambda key: abs(key)) if tag in tags_single else (lambda key: max(abs(key[0]), abs(key[1])))
        half = [v[tag] for key, v in src.items() if tag in v and key_max(key) <= kmax // 2]
        full = [v[tag] for key, v in src.items() if tag in v]
        out[tag] = EstimateFit(tag, float(max(half)), float(max(full)), len(full))
    return out


def Y_ratio_check(k_over_l: int = 2, l1: int = 10, l2: int = 20, lam: float = 10.0,
                  delta: float = 0.4) -> SeriesCheck:
    """Y_{k,l} decays like e^{-delta l}: ratio at l2 vs l1 against e^{-(l2-l1) delta} (1 + 0.5)."""
    P = ProfileSet(lam, delta, k_over_l * l2)
    _, Y1 = _Xkl(P, k_over_l * l1, l1)
    _, Y2 = _Xkl(P, k_over_l * l2, l2)
    limit = np.exp(-(l2 - l1) * delta) * 1.5
    r = Y2 / Y1
    # pass iff r <= limit, encoded as |r - 0| <= limit
    return SeriesCheck("Y_decay_ratio", {"k/l": k_over_l, "l1": l1, "l2": l2, "lam": lam, "delta": delta},
                       r, 0.0, limit - ABS_TOL)


def full_suite(lam: float = 10.0, delta: float = 0.4) -> list[SeriesCheck]:
    rows = power_identity_suite()
    rows.append(check_power_identity("sin_over_k", 0.9, 0.7, K=100000))
    rows.append(check_power_identity("geometric", 0.0, 0.5))
    rows += check_profile_closed_forms(lam, delta)
    for k in (0, 1, 5, 20, 80):
        rows += check_fk_estimates(k, None, lam, delta)
    rows += check_fk_estimates(7, None, 1.0, delta)
    rows += [f.as_check() for f in fit_estimates(lam, delta).values()]
    rows.append(Y_ratio_check(lam=lam, delta=delta))
    return rows
