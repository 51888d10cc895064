import json
import subprocess
import sys
from pathlib import Path

import pytest

from quasilie.pipelines.cli import EXIT_FAIL, EXIT_NUMERIC, EXIT_PASS, EXIT_USAGE, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


@pytest.mark.parametrize("verb,config", [
    ("zcc", "riccati_zcc.json"),
    ("superpose", "riccati_zcc.json"),
    ("membership", "sine_gordon_membership.json"),
    ("scheme-verify", "abel_scheme.json"),
    ("transform", "abel_transform.json"),
    ("bracket", "sl2_basis.json"),
    ("invariants", "gcc_family.json"),
    ("solve-abel", "gcc_family.json"),
])
def test_shipped_configs_pass(verb, config, capsys):
    assert main([verb, "--config", str(CONFIGS / config)]) == EXIT_PASS
    rep = json.loads(capsys.readouterr().out)
    assert rep["pass"] is True and rep["provenance"]["config_hash"]


def test_failing_check_exit_code(tmp_path, capsys):
    cfg = {"field": {"components": [["x", "t1*x^2"]], "time_vars": ["t1", "t2"]}}
    assert main(["zcc", "--config", write(tmp_path, cfg)]) == EXIT_FAIL
    assert json.loads(capsys.readouterr().out)["pass"] is False


def test_bad_json_reports_position(tmp_path, capsys):
    path = write(tmp_path, '{\n  "field": {"components": [["x"]],}\n}')
    assert main(["zcc", "--config", path]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err


def test_usage_errors(tmp_path, capsys):
    assert main(["zcc"]) == EXIT_USAGE
    assert main(["nonsense"]) == EXIT_USAGE
    assert main(["zcc", "--config", str(tmp_path / "missing.json")]) == EXIT_USAGE
    assert main(["zcc", "--config", write(tmp_path, {"field": {"components": [["x +"]]}})]) == EXIT_USAGE
    cfg = {"parameters": {"k": 1}, "field": {"components": [["q*x"]]}}
    assert main(["zcc", "--config", write(tmp_path, cfg)]) == EXIT_USAGE
    assert main(["scenario", "run"]) == EXIT_USAGE
    capsys.readouterr()


def test_numeric_breakdown(tmp_path, capsys):
    cfg = {"abel": {"coefficients": ["0", "0", "1", "1"], "eps": 3, "x0": 2.0, "interval": [0, 5]}}
    assert main(["solve-abel", "--config", write(tmp_path, cfg)]) == EXIT_NUMERIC
    assert "numeric breakdown" in capsys.readouterr().err


def test_invariants_csv(capsys):
    assert main(["invariants", "--config", str(CONFIGS / "gcc_family.json"), "--format", "csv"]) == EXIT_PASS
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t,F1,F2,F3"
    assert len(lines) == 12
    f1 = {ln.split(",")[1] for ln in lines[1:]}
    assert len({round(float(v), 8) for v in f1}) == 1


def test_solve_abel_csv_to_file(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    assert main(["solve-abel", "--config", str(CONFIGS / "gcc_family.json"), "--format", "csv", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,x" and len(lines) == 1002
    assert "PASS" in capsys.readouterr().err


def test_zcc_csv_indexing(capsys):
    assert main(["zcc", "--config", str(CONFIGS / "riccati_zcc.json"), "--format", "csv"]) == EXIT_PASS
    lines = capsys.readouterr().out.splitlines()
    assert lines[1].startswith("2,1,") or lines[1].startswith("1,2,")


def test_scenario_list_and_run(tmp_path, capsys):
    assert main(["scenario", "list"]) == EXIT_PASS
    names = [ln.split("\t")[0] for ln in capsys.readouterr().out.splitlines()]
    assert "sine-gordon" in names
    out = tmp_path / "sg.json"
    assert main(["scenario", "run", "sine-gordon", "--out", str(out)]) == EXIT_PASS
    rep = json.loads(out.read_text())
    assert rep["scenario"] == "sine-gordon" and rep["pass"] is True


def test_scenario_csv(capsys):
    assert main(["scenario", "run", "classic-abel", "--format", "csv"]) == EXIT_PASS
    assert capsys.readouterr().out.startswith("scenario,check,value,tol,pass\n")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "quasilie", "scenario", "list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "liouville" in proc.stdout
