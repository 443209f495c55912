import json
import subprocess
import sys

import pytest

from npogd.cli import main


def test_project_prints_json(capsys):
    bodies = json.dumps([{"type": "ball", "center": [0, 0], "radius": 1},
                         {"type": "halfspace", "normal": [0, 1], "offset": 0.5}])
    assert main(["project", "--point", "[0, 3]", "--bodies", bodies]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["point"] == pytest.approx([0.0, 0.5], abs=1e-10)
    assert out["residual"] <= 1e-10


def test_project_rejects_bad_bodies(capsys):
    assert main(["project", "--point", "[0, 3]", "--bodies", '[{"type": "cone"}]']) == 2
    assert main(["project", "--point", "[0,", "--bodies", "[]"]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_run_writes_trace(tmp_path):
    out = tmp_path / "trace.csv"
    code = main(["run", "--loss", "rotating-linear", "--constraints", "mixed-quasiball",
                 "--schedule", "sqrt-decay", "--T", "20", "--seed", "3", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("t,x0,x1,loss,violation,eta")
    assert len(lines) == 21


def test_sweep_writes_csv_and_json(tmp_path):
    prefix = tmp_path / "sweep"
    code = main(["sweep", "--T-list", "16,32,64", "--seed", "2", "--out", str(prefix)])
    assert code == 0
    assert (tmp_path / "sweep.csv").read_text().startswith("T,seed,regret,")
    summary = json.loads((tmp_path / "sweep.json").read_text())
    assert summary["rows"] == 3 and summary["fits"]["ccv"]["logT"] is not None


def test_sweep_from_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"T_list": [8, 16], "seeds": [4, 5],
                               "generator": {"loss": "drifting-quadratic", "constraints": "mixed-quasiball"}}))
    assert main(["sweep", "--config", str(cfg)]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert len(rows) == 5


@pytest.mark.parametrize("argv", [
    ["sweep", "--T-list", "64,32"],
    ["sweep", "--loss", "spiral"],
    ["run", "--config", "/nonexistent/cfg.json"],
    ["run", "--seed", "-4"],
    ["sweep", "--schedule", "constant"],
])
def test_configuration_errors_exit_2(argv):
    assert main(argv) == 2


def test_config_with_unknown_key_exits_2(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"T_list": [8], "colour": "red"}))
    assert main(["sweep", "--config", str(cfg)]) == 2


def test_failed_cells_exit_1(monkeypatch, capsys):
    from npogd import harness
    from npogd.errors import OracleError

    def broken(inst, *args, **kwargs):
        raise OracleError("stalled", inst.anchor, 0.0, 1.0)

    monkeypatch.setattr(harness, "offline_optimum", broken)
    assert main(["sweep", "--T-list", "8,16"]) == 1
    captured = capsys.readouterr()
    assert "failed" in captured.err
    assert captured.out.splitlines()[1].split(",")[2] == "nan"


def test_verify_exit_codes(monkeypatch, tmp_path):
    from npogd import cli
    from npogd.harness import CheckResult, VerifyReport

    monkeypatch.setattr(cli, "verify_suite", lambda level, seed=0: VerifyReport(
        level, [CheckResult("always", True, 0.0, 1.0)]))
    out = tmp_path / "report.txt"
    assert main(["verify", "--out", str(out)]) == 0
    assert out.read_text().startswith("PASS")
    monkeypatch.setattr(cli, "verify_suite", lambda level, seed=0: VerifyReport(
        level, [CheckResult("never", False, 2.0, 1.0)]))
    assert main(["verify"]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "npogd", "verify", "--level", "fast"],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert proc.stdout.strip().splitlines()[-1].endswith("checks passed")
