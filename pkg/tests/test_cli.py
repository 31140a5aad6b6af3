import json

import pytest

from gldeg.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main, run


def _manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_mesh_annulus(tmp_path):
    assert run("mesh", {"domain": {"type": "annulus", "r": 0.3, "h": 0.1}}, tmp_path) == EXIT_OK
    text = (tmp_path / "mesh.txt").read_text()
    assert "# loops 2" in text
    m = _manifest(tmp_path)
    assert m["status"] == "ok" and m["config"]["domain"]["r"] == 0.3 and "mesh.txt" in m["outputs"]


def test_verify_series_default(tmp_path):
    assert run("verify-series", {}, tmp_path) == EXIT_OK
    rows = (tmp_path / "series.csv").read_text().splitlines()[1:]
    assert len(rows) >= 20 and all(r.endswith(",1") for r in rows)


@pytest.mark.parametrize("sub,config", [
    ("harmonic", {"domain": {"h": 0.1}, "d": [1]}),
    ("energy", {"domain": {"h": 0.1}, "eps": 0.1, "field": {"type": "harmonic", "d": [1]}}),
    ("abdeg", {"domain": {"type": "circles", "h": 0.08, "outer": {"c": [0, 0], "r": 1},
                          "holes": [{"c": [-0.4, 0], "r": 0.15}, {"c": [0.4, 0.1], "r": 0.15}]},
               "field": {"type": "harmonic", "d": [1, -1]}}),
    ("testfn", {"t": [0.1], "eps": 0.5}),
])
def test_subcommands_deterministic(tmp_path, sub, config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(sub, config, a) == EXIT_OK
    assert run(sub, config, b) == EXIT_OK
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir()) and "manifest.json" in files
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_abdeg_output(tmp_path):
    run("abdeg", {"domain": {"h": 0.1}, "field": {"type": "harmonic", "d": [2]}}, tmp_path)
    rows = (tmp_path / "abdeg.csv").read_text().splitlines()
    assert rows[1].startswith("0,2") and rows[2].startswith("1,2,1.9")


def test_minimize(tmp_path):
    cfg = {"domain": {"h": 0.1}, "p": [1], "q": 1, "d": [1], "eps": 0.1, "max_steps": 50, "tol": 1e-8}
    assert run("minimize", cfg, tmp_path) == EXIT_OK
    conv = (tmp_path / "convergence.csv").read_text().splitlines()
    assert conv[0] == "step,energy,residual" and len(conv) >= 2
    assert _manifest(tmp_path)["result"]["in_class"] is True


def test_mutate(tmp_path):
    cfg = {"domain": {"h": 0.1}, "shifts": [1, 0], "eta": 0.2, "eps": 0.05, "field": {"type": "constant"}}
    assert run("mutate", cfg, tmp_path) == EXIT_OK
    row = (tmp_path / "mutate.csv").read_text().splitlines()[1].split(",")
    assert row[0] == "0 0" and row[1] == "1 0"


@pytest.mark.parametrize("config,path", [
    ({"domain": {"h": -1}}, "config.domain.h"),
    ({"domain": {"type": "square"}}, "config.domain.type"),
    ({"domain": {"h": 0.1}, "bogus": 1}, "config.bogus"),
])
def test_config_errors_name_the_field(tmp_path, config, path):
    assert run("mesh", config, tmp_path) == EXIT_CONFIG
    m = _manifest(tmp_path)
    assert m["status"] == "config_error" and m["error"]["message"].startswith(path)


def test_precondition_is_config_error(tmp_path):
    assert run("testfn", {"t": [0.1], "eps": 0.05, "lam": 10}, tmp_path) == EXIT_CONFIG
    assert _manifest(tmp_path)["error"]["class"] == "ParameterError"


def test_numeric_error_exit(tmp_path, monkeypatch):
    from gldeg import cli
    from gldeg.errors import NumericError

    def boom(c, out, seed):
        raise NumericError("solver diverged")
    monkeypatch.setitem(cli.COMMANDS, "mesh", boom)
    assert run("mesh", {}, tmp_path) == EXIT_NUMERIC
    assert _manifest(tmp_path)["error"]["class"] == "NumericError"


def test_suite_subset(tmp_path, monkeypatch):
    monkeypatch.setenv("GLDEG_THREADS", "1")
    assert main(["suite", "--params", '{"criteria": [3, 6]}', "--out", str(tmp_path)]) == EXIT_OK
    crit = _manifest(tmp_path)["result"]["criteria"]
    assert set(crit) == {"3", "6"} and all(v["pass"] for v in crit.values())


def test_main_bad_json(tmp_path):
    assert main(["mesh", "--params", "{not json", "--out", str(tmp_path)]) == EXIT_CONFIG
