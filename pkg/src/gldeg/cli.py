"""Batch runner: ``gldeg <subcommand> [--config FILE | --params JSON] --out DIR``.

Every subcommand writes CSV files and a ``manifest.json`` echoing the config,
the package version and the produced files. Outputs are written atomically
and contain no timestamps, so equal configs give byte-identical outputs.

Exit status: 0 success, 2 config error, 3 numeric error, 4 acceptance failure.
``GLDEG_THREADS`` caps the worker pool used by ``suite``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import ConfigError, GldegError, ParameterError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 2, 3, 4


# ------------------------------------------------------------------ config access

class Cfg:
    """Typed access to a JSON object; errors name the offending field path."""

    def __init__(self, obj: Any, path: str = "config"):
        if not isinstance(obj, dict):
            raise ConfigError(f"{path}: expected an object")
        self.obj, self.path = obj, path
        self.used: set[str] = set()

    def _get(self, key, default, required):
        self.used.add(key)
        if key not in self.obj:
            if required:
                raise ConfigError(f"{self.path}.{key}: required field missing")
            return default
        return self.obj[key]

    def num(self, key, default=None, *, required=False, positive=False) -> float:
        v = self._get(key, default, required)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{self.path}.{key}: expected a number, got {v!r}")
        if positive and not v > 0:
            raise ConfigError(f"{self.path}.{key}: must be positive")
        return float(v)

    def int(self, key, default=None, *, required=False) -> int:
        v = self._get(key, default, required)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{self.path}.{key}: expected an integer, got {v!r}")
        return v

    def ints(self, key, default=None, *, required=False) -> tuple[int, ...]:
        v = self._get(key, default, required)
        if isinstance(v, int) and not isinstance(v, bool):
            v = [v]
        if not isinstance(v, (list, tuple)) or not all(isinstance(x, int) and not isinstance(x, bool) for x in v):
            raise ConfigError(f"{self.path}.{key}: expected a list of integers, got {v!r}")
        return tuple(v)

    def nums(self, key, default=None, *, required=False) -> tuple[float, ...]:
        v = self._get(key, default, required)
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            v = [v]
        if not isinstance(v, (list, tuple)) or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                                       for x in v):
            raise ConfigError(f"{self.path}.{key}: expected a list of numbers, got {v!r}")
        return tuple(float(x) for x in v)

    def bool(self, key, default=False) -> bool:
        v = self._get(key, default, False)
        if not isinstance(v, bool):
            raise ConfigError(f"{self.path}.{key}: expected true or false")
        return v

    def sub(self, key, default=None, *, required=False) -> "Cfg":
        v = self._get(key, default, required)
        return Cfg(v if v is not None else {}, f"{self.path}.{key}")

    def raw(self, key, default=None):
        return self._get(key, default, False)

    def finish(self) -> None:
        extra = sorted(set(self.obj) - self.used)
        if extra:
            raise ConfigError(f"{self.path}.{extra[0]}: unknown field")


def domain_from(c: Cfg):
    from .geometry import Circle, DomainSpec, Refinement
    kind = c.raw("type", "annulus")
    h = c.num("h", 0.05, positive=True)
    refine = []
    for i, r in enumerate(c.raw("refine", []) or []):
        try:
            refine.append(Refinement.from_json(r))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"{c.path}.refine[{i}]: {e}") from None
    if kind == "annulus":
        spec = DomainSpec.annulus(c.num("r", 0.3, positive=True), h, refine)
    elif kind == "disk":
        spec = DomainSpec.disk(h, refine)
    elif kind == "circles":
        try:
            outer = Circle.from_json(c.raw("outer"))
            holes = tuple(Circle.from_json(x) for x in c.raw("holes", []))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"{c.path}: bad circle ({e})") from None
        spec = DomainSpec(outer, holes, h, tuple(refine))
    else:
        raise ConfigError(f"{c.path}.type: expected annulus, disk or circles, got {kind!r}")
    c.finish()
    try:
        spec.validate()
    except GldegError as e:
        raise ConfigError(f"{c.path}: {e}") from None
    return spec


def field_from(c: Cfg, mesh, eps: float | None = None):
    """Starting fields: constant, harmonic (degrees d) or starter (class p, q, d)."""
    from .fields import ComplexField
    from .relax import harmonic_base, starter
    kind = c.raw("type", "harmonic")
    if kind == "constant":
        c.finish()
        return ComplexField(mesh, np.ones(mesh.n_vertices, complex))
    if kind == "harmonic":
        d = c.ints("d", (1,) * mesh.n_holes)
        c.finish()
        if len(d) != mesh.n_holes:
            raise ConfigError(f"{c.path}.d: one degree per hole required")
        return harmonic_base(mesh, d)
    if kind == "starter":
        p, q, d = c.ints("p", required=True), c.int("q", required=True), c.ints("d", required=True)
        b = c.raw("bubble")
        c.finish()
        return starter(mesh, p, q, d, eps if eps is not None else 0.05, b)
    raise ConfigError(f"{c.path}.type: expected constant, harmonic or starter, got {kind!r}")


# ------------------------------------------------------------------ output

class Output:
    def __init__(self, out: Path):
        self.dir = out
        self.files: dict[str, str] = {}

    def write(self, name: str, text: str) -> None:
        self.dir.mkdir(parents=True, exist_ok=True)
        data = text.encode()
        fd, tmp = tempfile.mkstemp(dir=self.dir, prefix=f".{name}.", suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, self.dir / name)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def manifest(self, sub: str, config: dict, seed: int, status: str, extra: dict | None = None) -> None:
        m = {"subcommand": sub, "version": __version__, "seed": seed, "config": config,
             "status": status, "outputs": dict(sorted(self.files.items()))}
        m.update(extra or {})
        self.write("manifest.json", json.dumps(m, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    return str(x)


def _csv(header: str, rows) -> str:
    return header + "\n" + "".join(r + "\n" for r in rows)


# ------------------------------------------------------------------ subcommands

def cmd_mesh(c: Cfg, out: Output, seed: int) -> dict:
    from .geometry import build_mesh, export_mesh_text
    spec = domain_from(c.sub("domain"))
    c.finish()
    m = build_mesh(spec, seed=seed)
    out.write("mesh.txt", export_mesh_text(m))
    out.write("mesh_stats.csv", _csv("n_vertices,n_triangles,n_loops,min_angle_deg,euler_characteristic",
                                     [f"{m.n_vertices},{m.n_triangles},{len(m.boundary_loops)},"
                                      f"{m.min_angle_deg():.6f},{m.euler_characteristic()}"]))
    return {"n_loops": len(m.boundary_loops)}


def cmd_harmonic(c: Cfg, out: Output, seed: int) -> dict:
    from .elliptic import dirichlet_energy, harmonic_conjugate, solve_all_V, solve_h0
    from .fields import field_csv
    from .geometry import build_mesh
    from .relax import harmonic_base
    spec = domain_from(c.sub("domain"))
    m = build_mesh(spec, seed=seed)
    d = c.ints("d", (1,) * m.n_holes)
    c.finish()
    if len(d) != m.n_holes:
        raise ConfigError("config.d: one degree per hole required")
    V = solve_all_V(m)
    h0, c0 = solve_h0(m, d)
    hc, cc = harmonic_conjugate(harmonic_base(m, d))
    cols = {f"V{i + 1}": v.values for i, v in enumerate(V)}
    cols.update({"h0": h0.values, "h_conjugate": hc.values})
    out.write("harmonic.csv", field_csv(m, cols))
    rows = [f"{k + 1},{a:.12e},{b:.12e}" for k, (a, b) in enumerate(zip(np.atleast_1d(c0), np.atleast_1d(cc)))]
    out.write("hole_constants.csv", _csv("hole,h0_constant,conjugate_constant", rows))
    I0 = dirichlet_energy(m, h0.values)
    out.write("I0.csv", _csv("I0", [f"{I0:.12e}"]))
    return {"I0": I0}


def cmd_energy(c: Cfg, out: Output, seed: int) -> dict:
    from .energy import energy_GL, residual_GL
    from .geometry import build_mesh
    spec = domain_from(c.sub("domain"))
    eps = c.num("eps", required=True, positive=True)
    m = build_mesh(spec, seed=seed)
    u = field_from(c.sub("field"), m, eps)
    c.finish()
    e = energy_GL(u, eps)
    r = residual_GL(u, eps, dual=True)
    out.write("energy.csv", _csv("tag,dirichlet,potential,total,eps", [e.csv_row()]))
    out.write("residual.csv", _csv("interior,interior_dual,boundary_modulus," +
                                   ",".join(f"flux{k}" for k in range(len(r.phase_flux))),
                                   [f"{r.interior:.6e},{r.interior_dual:.6e},{r.boundary_modulus:.3e}," +
                                    ",".join(f"{f:.6e}" for f in r.phase_flux)]))
    return {"energy": e.total}


def cmd_abdeg(c: Cfg, out: Output, seed: int) -> dict:
    from .elliptic import solve_all_V
    from .fields import abdeg, loop_degrees
    from .geometry import build_mesh
    spec = domain_from(c.sub("domain"))
    eps = c.num("eps", 0.05, positive=True)
    m = build_mesh(spec, seed=seed)
    u = field_from(c.sub("field"), m, eps)
    c.finish()
    degs = loop_degrees(u)
    ab = abdeg(u, solve_all_V(m))
    rows = [f"0,{degs[0]},"] + [f"{k + 1},{degs[k + 1]},{a:.12e}" for k, a in enumerate(ab)]
    out.write("abdeg.csv", _csv("loop,degree,abdeg", rows))
    return {"degrees": degs, "abdeg": ab}


def cmd_mutate(c: Cfg, out: Output, seed: int) -> dict:
    from .degree_mutation import mutate_degrees, mutation_refinements
    from .geometry import DomainSpec, build_mesh
    base = domain_from(c.sub("domain"))
    shifts = c.ints("shifts", required=True)
    eta = c.num("eta", 0.1, positive=True)
    eps = c.num("eps", 0.05, positive=True)
    if len(shifts) != len(base.circles):
        raise ConfigError("config.shifts: one shift per boundary loop (outer first) required")
    spec = DomainSpec(base.outer, base.holes, base.target_edge_length,
                      tuple(base.refine) + tuple(mutation_refinements(base, shifts, eta)))
    m = build_mesh(spec, seed=seed)
    u = field_from(c.sub("field"), m, eps)
    c.finish()
    r = mutate_degrees(u, shifts, eta, eps)
    out.write("mutate.csv", _csv(
        "degrees_before,degrees_after,energy_before,energy_after,extra,l2_drift",
        [f"{' '.join(map(str, r.degrees_before))},{' '.join(map(str, r.degrees_after))},"
         f"{r.energy_before:.12e},{r.energy_after:.12e},{r.extra_energy:.12e},{r.l2_drift:.12e}"]))
    out.write("field.csv", r.field.to_csv())
    return {"extra_energy": r.extra_energy}


def cmd_testfn(c: Cfg, out: Output, seed: int) -> dict:
    from .degree_mutation import TestFnParams, verify_testfn
    from .geometry import AnnulusChart
    d = c.int("d", 1)
    r = c.num("r", 0.3, positive=True)
    delta = c.num("delta", 0.5, positive=True)
    ts = c.nums("t", (0.05, 0.02, 0.01))
    eps = c.num("eps", 0.05, positive=True)
    K = c.int("K", 0)
    lam = c.raw("lam")
    c.finish()
    chart = AnnulusChart(r, d)
    rows = []
    for t in ts:
        rep = verify_testfn(chart, TestFnParams(t, delta, K=K), eps, lam)
        rows.append(rep.csv_row())
    out.write("testfn.csv", _csv("t,M_lambda,bound,pi_margin,deg_outer", rows))
    return {}


def cmd_verify_series(c: Cfg, out: Output, seed: int) -> dict:
    from .series_oracle import CSV_HEADER, full_suite
    lam = c.num("lam", 10.0, positive=True)
    delta = c.num("delta", 0.4, positive=True)
    c.finish()
    rows = full_suite(lam, delta)
    out.write("series.csv", _csv(CSV_HEADER, [r.csv_row() for r in rows]))
    failed = sum(not r.passed for r in rows)
    return {"checks": len(rows), "failed": failed, "_exit": EXIT_ACCEPTANCE if failed else EXIT_OK}


def cmd_minimize(c: Cfg, out: Output, seed: int) -> dict:
    from .geometry import DomainSpec, build_mesh
    from .relax import FlowOptions, bubble_refinements, local_min_experiment
    base = domain_from(c.sub("domain"))
    p, q, d = c.ints("p", required=True), c.int("q", required=True), c.ints("d", required=True)
    eps = c.num("eps", required=True, positive=True)
    opts = FlowOptions(max_steps=c.int("max_steps", 200), tol=c.num("tol", 1e-8, positive=True))
    bubble = c.raw("bubble")
    hr = c.num("bubble_refine", 1e-4, positive=True)
    c.finish()
    spec = DomainSpec(base.outer, base.holes, base.target_edge_length,
                      tuple(base.refine) + tuple(bubble_refinements(base, p, q, d, hr)))
    m = build_mesh(spec, seed=seed)
    r = local_min_experiment(p, q, d, eps, m, opts, bubble)
    out.write("convergence.csv", r.flow.csv())
    out.write("field.csv", r.flow.u.to_csv())
    out.write("summary.csv", _csv("eps,energy,I0,ae,target,ratio,in_class,status,steps", [r.csv_row()]))
    return {"status": r.flow.status, "in_class": r.in_class_end}


def cmd_suite(c: Cfg, out: Output, seed: int) -> dict:
    from .acceptance import CRITERIA, CSV_HEADER
    ids = c.ints("criteria", tuple(CRITERIA))
    allow = c.bool("allow_known_failures", False)
    c.finish()
    bad = [i for i in ids if i not in CRITERIA]
    if bad:
        raise ConfigError(f"config.criteria: unknown criterion {bad[0]}")
    res = _run_criteria(ids)
    out.write("suite.csv", _csv(CSV_HEADER, [r.csv_row() for r in res]))
    for r in res:
        print(r.line())
    crit = {str(r.id): {"pass": r.passed, "title": r.title, "known_limitation": r.known_limitation}
            for r in res}
    fail = any(not r.passed and not (allow and r.known_limitation) for r in res)
    return {"criteria": crit, "_exit": EXIT_ACCEPTANCE if fail else EXIT_OK}


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("GLDEG_THREADS", "1")))
    except ValueError:
        raise ConfigError("GLDEG_THREADS: expected an integer") from None


def _run_criteria(ids):
    from .acceptance import run_criterion
    n = min(_workers(), len(ids))
    if n <= 1:
        return [run_criterion(i) for i in ids]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(run_criterion, ids))


COMMANDS: dict[str, Callable[[Cfg, Output, int], dict]] = {
    "mesh": cmd_mesh, "harmonic": cmd_harmonic, "energy": cmd_energy, "abdeg": cmd_abdeg,
    "mutate": cmd_mutate, "testfn": cmd_testfn, "verify-series": cmd_verify_series,
    "minimize": cmd_minimize, "suite": cmd_suite,
}


def run(sub: str, config: dict, out_dir: str | Path, seed: int = 0) -> int:
    out = Output(Path(out_dir))
    try:
        if sub not in COMMANDS:
            raise ConfigError(f"unknown subcommand {sub!r}")
        np.random.seed(seed)
        extra = COMMANDS[sub](Cfg(config), out, seed) or {}
    except (ConfigError, ParameterError) as e:
        # parameters outside an operation's preconditions are config errors too
        print(f"gldeg {sub}: config error: {e}", file=sys.stderr)
        out.manifest(sub, config, seed, "config_error", {"error": {"class": type(e).__name__, "message": str(e)}})
        return EXIT_CONFIG
    except GldegError as e:
        print(f"gldeg {sub}: {type(e).__name__}: {e}", file=sys.stderr)
        out.manifest(sub, config, seed, "numeric_error",
                     {"error": {"class": type(e).__name__, "message": str(e)}})
        return EXIT_NUMERIC
    code = extra.pop("_exit", EXIT_OK)
    out.manifest(sub, config, seed, "ok" if code == EXIT_OK else "acceptance_failure", {"result": extra})
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="gldeg", description=__doc__.split("\n")[0])
    ap.add_argument("subcommand", choices=sorted(COMMANDS))
    g = ap.add_mutually_exclusive_group()
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--params", help="inline JSON config")
    ap.add_argument("--out", default="gldeg_out", help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    a = ap.parse_args(argv)
    try:
        if a.config:
            config = json.loads(Path(a.config).read_text())
        else:
            config = json.loads(a.params) if a.params else {}
    except (OSError, json.JSONDecodeError) as e:
        print(f"gldeg: cannot read config: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if not isinstance(config, dict):
        print("gldeg: config must be a JSON object", file=sys.stderr)
        return EXIT_CONFIG
    return run(a.subcommand, config, a.out, a.seed)


if __name__ == "__main__":
    sys.exit(main())
