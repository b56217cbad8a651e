import hashlib
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from lcsde import cli, config, proptest
from lcsde.config import ConfigError


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _digests(outdir):
    with open(os.path.join(outdir, "manifest.json")) as fh:
        return json.load(fh)["outputs"]


SOLVE = {"schema": 1, "mode": "solve", "preset": "compounding", "grid": {"T": 1.0, "M": 16},
         "paths": 4, "seed": 3, "iterations": 4}


# --- geom ------------------------------------------------------------------------------

def test_geom_hausdorff(capsys):
    assert cli.main(["geom", "hausdorff({(1,1)}+orthant2, orthant2)"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(2 ** 0.5, rel=1e-12)


def test_geom_scale_literal(capsys):
    assert cli.main(["geom", "scale(2, {(1,0)}+orthant2)"]) == 0
    assert capsys.readouterr().out.strip() == '{"vertices":[[2,0]],"cone":[[1,0],[0,1]]}'


def test_geom_cone_mismatch_text(capsys):
    code = cli.main(["geom", "sum({(0,0)}+orthant2, {(0,0)}+cone{(1,-1)})"])
    assert code == 2
    assert "Hausdorff distance would be infinite" in capsys.readouterr().err


def test_geom_parse_error_position(capsys):
    assert cli.main(["geom", "hausdorff({(1,1)} orthant2)"]) == 2
    err = capsys.readouterr().err
    assert "parse error at position 18" in err


@pytest.mark.parametrize("expr, expect", [
    ("distance((0,0), {(1,1)}+orthant2)", 2 ** 0.5),
    ("support({(1,2),(3,0)}+orthant2, (-1,0))", -1.0),
    ("excess(orthant2, {(1,0)}+orthant2)", 1.0),
    ("hausdorff(-1*{(1,0)}+orthant2, orthant2)", None),
])
def test_geom_functions(capsys, expr, expect):
    code = cli.main(["geom", expr])
    if expect is None:
        assert code == 2  # negative scale factors are rejected
    else:
        assert code == 0
        assert float(capsys.readouterr().out) == pytest.approx(expect, abs=1e-12)


def test_geom_join_recession(capsys):
    assert cli.main(["geom", "join({(1,0)}+orthant2, {(0,1)}+orthant2)"]) == 0
    lit = json.loads(capsys.readouterr().out)
    assert sorted(lit["vertices"]) == [[0, 1], [1, 0]]
    assert cli.main(["geom", "recession({(3,-1)}+orthant2)"]) == 0
    assert json.loads(capsys.readouterr().out) == {"cone": [[1, 0], [0, 1]]}


# --- run -------------------------------------------------------------------------------

def test_run_solve_writes_report(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["run", _write(tmp_path, SOLVE), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert "iterate_distances" in report and "bounds" in report
    assert len(report["iterate_distances"]) == 3
    for name in ("rates.csv", "moduli.csv", "manifest.json", "config.json"):
        assert (out / name).exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 3 and man["version"] and man["wall_clock_seconds"] >= 0
    for name, dg in man["outputs"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == dg


def test_run_invalid_config_exit2_no_outputs(tmp_path):
    out = tmp_path / "out"
    cfg = {"schema": 1, "mode": "finance", "market": {"lambda": -0.2, "mu": 0.3}, "grid": {"M": 8}}
    assert cli.main(["run", _write(tmp_path, cfg), "--out", str(out)]) == 2
    assert not out.exists()


def test_run_unknown_key_rejected(tmp_path):
    cfg = dict(SOLVE, bogus=1)
    assert cli.main(["run", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2


def test_run_nonconvergence_exit3(tmp_path):
    out = tmp_path / "out"
    cfg = dict(SOLVE, iterations=2, tol=1e-30)
    assert cli.main(["run", _write(tmp_path, cfg), "--out", str(out)]) == 3
    assert not out.exists()


@pytest.mark.parametrize("cfg", [
    SOLVE,
    {"schema": 1, "mode": "finance", "market": {"lambda": 0.2, "mu": 0.3, "r": 0.02, "b": 0.05, "sigma": 0.1,
                                                  "p": 1, "x": 1, "y": 1},
     "grid": {"M": 64}, "paths": 2, "strategies": 2, "seed": 5},
    {"schema": 1, "mode": "integrate", "grid": {"M": 10},
     "field": [{"vertices": [[1, 0]], "cone": [[1, 0], [0, 1]]}, {"vertices": [[0, 2]], "cone": [[1, 0], [0, 1]]}]},
    {"schema": 1, "mode": "geom", "expressions": ["hausdorff({(1,1)}+orthant2, orthant2)"]},
    {"schema": 1, "mode": "proptest", "suite": "cancellation", "cases": 20, "seed": 4},
])
def test_rerun_digests_identical(tmp_path, cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    path = _write(tmp_path, cfg)
    assert cli.main(["run", path, "--out", str(a)]) == 0
    assert cli.main(["run", path, "--out", str(b)]) == 0
    assert _digests(a) == _digests(b)
    for name in _digests(a):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_finance_run_outputs(tmp_path):
    out = tmp_path / "out"
    cfg = {"schema": 1, "mode": "finance", "preset": "finance-default", "grid": {"M": 32}, "paths": 1}
    assert cli.main(["run", _write(tmp_path, cfg), "--out", str(out)]) == 0
    head = (out / "residuals.csv").read_text().splitlines()[0]
    assert head == "path_id,node,t,residual,tolerance"
    summary = json.loads((out / "finance.json").read_text())
    assert summary["max_inclusion_residual"] <= summary["inclusion_tolerance"]


def test_thread_cap_env(monkeypatch):
    monkeypatch.setenv("LCSDE_THREADS", "1")
    assert cli.apply_thread_cap() == 1
    monkeypatch.setenv("LCSDE_THREADS", "zero")
    with pytest.raises(ConfigError):
        cli.apply_thread_cap()


# --- export ----------------------------------------------------------------------------

def test_export_tables(tmp_path, capsys):
    out = tmp_path / "out"
    cli.main(["run", _write(tmp_path, SOLVE), "--out", str(out)])
    exp1, exp2 = tmp_path / "e1", tmp_path / "e2"
    assert cli.main(["export", str(out / "report.json"), "--out", str(exp1)]) == 0
    assert cli.main(["export", str(out / "report.json"), "--out", str(exp2)]) == 0
    assert sorted(os.listdir(exp1)) == ["moduli.csv", "rates.csv"]
    assert (exp1 / "rates.csv").read_text().splitlines()[0] == "iteration,node,t,observed,bound"
    assert (exp1 / "moduli.csv").read_text().splitlines()[0] == "s,t,modulus"
    for name in os.listdir(exp1):
        assert (exp1 / name).read_bytes() == (exp2 / name).read_bytes()


def test_export_k1_bounds_only(tmp_path):
    out = tmp_path / "out"
    cfg = dict(SOLVE, iterations=1)
    assert cli.main(["run", _write(tmp_path, cfg), "--out", str(out)]) == 0
    exp = tmp_path / "exp"
    assert cli.main(["export", str(out / "report.json"), "--out", str(exp)]) == 0
    assert os.listdir(exp) == ["bounds.csv"]


def test_export_missing_report(tmp_path):
    assert cli.main(["export", str(tmp_path / "nope.json")]) == 2


# --- proptest --------------------------------------------------------------------------

def test_proptest_cancellation_pass(capsys):
    assert cli.main(["proptest", "cancellation", "--cases", "100", "--seed", "0"]) == 0
    assert capsys.readouterr().out.startswith("PASS cancellation: 100/100")


def test_proptest_thm43_pass(capsys):
    assert cli.main(["proptest", "thm43", "--cases", "100", "--seed", "0"]) == 0


def test_proptest_unknown_suite(capsys):
    assert cli.main(["proptest", "no-such-suite"]) == 2


def test_proptest_shrinks_counterexample(monkeypatch, capsys):
    # a deliberately false property: every set has exactly one vertex
    def check(case):
        n = np.asarray(case["A"]).shape[0]
        return n == 1, f"{n} vertices"

    base = proptest.SUITES["prune"]
    bad = proptest.Suite("one-vertex", base.generate, check, "false on purpose")
    monkeypatch.setitem(proptest.SUITES, "one-vertex", bad)
    assert cli.main(["proptest", "one-vertex", "--cases", "30", "--seed", "1"]) == 1
    out = capsys.readouterr().out
    assert out.startswith("FAIL one-vertex")
    line = [ln for ln in out.splitlines() if ln.startswith("minimal counterexample: ")][0]
    small = json.loads(line.split(": ", 1)[1])
    assert len(small["A"]) == 2


# --- config ----------------------------------------------------------------------------

def test_config_round_trip(tmp_path):
    for cfg in (SOLVE, {"schema": 1, "mode": "proptest", "suite": "metric"}):
        once = config.parse_config(json.dumps(cfg))
        text = config.dump_config(once)
        assert config.parse_config(text) == once
        assert config.dump_config(config.parse_config(text)) == text


def test_config_errors():
    for bad in ('{"schema": 2, "mode": "geom", "expressions": ["1"]}',
                '{"schema": 1, "mode": "solve", "grid": {"M": 4}}',
                '{"schema": 1, "mode": "solve", "preset": "compounding", "grid": {"M": 0}}',
                '[1, 2]', 'not json'):
        with pytest.raises(ConfigError):
            config.parse_config(bad)
    with pytest.raises(ConfigError, match="theta_L and theta_M"):
        config.parse_config(json.dumps({"schema": 1, "mode": "finance", "grid": {"M": 4},
                                        "market": {"lambda": 0.1, "mu": 0.1,
                                                   "strategy": {"theta_L": [1], "theta_M": [1, 2]}}}))


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "lcsde.cli", "geom", "distance((3,4), {(0,0)})"],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0 and float(r.stdout) == 5.0
