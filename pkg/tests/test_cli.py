import csv
import json
import shutil
import subprocess
import sys

import pytest

from sharplab import cli
from sharplab import critical_points as cp
from sharplab import experiments as ex

CIRCLE = {
    "experiment": "equipartition",
    "domain": {"shape": "rectangle", "L": [1.0, 1.0], "n": [65, 65]},
    "interface": {"kind": "circle", "center": [0.5, 0.5], "r": 0.25},
    "eps": [0.08, 0.04],
    "grid": {"eps_over_h": 4},
    "profile": "level_set",
}

LAMELLA_OK = {
    "domain": {"shape": "rectangle", "L": [1.0, 1.0], "n": [33, 33]},
    "interface": {"kind": "segment", "x": 0.5},
    "eps": [0.1],
    "gamma": 1.0,
    "m": 0.0,
    "spectrum": {"k": 3, "symmetry": "odd_across_interface"},
}


def write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def manifest(out, sub):
    return json.loads((out / f"manifest.{sub}.json").read_text())


def test_check_variations(tmp_path):
    out = tmp_path / "cv"
    code = cli.main(["check-variations", "--probes", "2", "--n", "32", "--seed", "7", "--out", str(out)])
    assert code == cli.EXIT_OK
    assert header(out / "variations.csv") == cli.VARIATION_COLUMNS
    assert len(list((out / "variations").glob("probe-*.json"))) == 4
    m = manifest(out, "check-variations")
    assert m["exit_code"] == 0 and m["status"] == "passed" and len(m["config_hash"]) == 64
    assert str(out / "report.json") in m["outputs"]


def test_sweep_report_and_rejudge(tmp_path):
    cfg = write(tmp_path, "circle.json", CIRCLE)
    out = tmp_path / "sweep"
    assert cli.main(["sweep", "--config", cfg, "--out", str(out), "--jobs", "1"]) == cli.EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["config_hash"] == ex.ExperimentConfig.from_dict(CIRCLE).hash
    assert manifest(out, "sweep")["config_hash"] == report["config_hash"]
    assert header(out / "report.csv")[:3] == ["eps", "n", "h"]
    assert cli.main(["report", "--config", str(out / "report.json")]) == cli.EXIT_OK
    assert manifest(out, "report")["exit_code"] == 0


def test_sweep_is_bit_identical_across_runs(tmp_path):
    cfg = write(tmp_path, "circle.json", {**CIRCLE, "eps": [0.08]})
    for name in ("a", "b"):
        assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / name), "--jobs", "1"]) == 0
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()


def test_tampered_report_is_detected(tmp_path):
    cfg = write(tmp_path, "circle.json", CIRCLE)
    out = tmp_path / "sweep"
    cli.main(["sweep", "--config", cfg, "--out", str(out), "--jobs", "1"])
    doc = json.loads((out / "report.json").read_text())
    doc["verdicts"]["tv_gap"] = not doc["verdicts"]["tv_gap"]
    (out / "report.json").write_text(json.dumps(doc))
    assert cli.main(["report", "--out", str(out)]) == cli.EXIT_VERDICT


def test_failed_verdict_exits_2(tmp_path):
    cfg = write(tmp_path, "strict.json", {**CIRCLE, "tolerances": {"tv_rel": 1e-9}})
    out = tmp_path / "strict"
    assert cli.main(["sweep", "--config", cfg, "--out", str(out)]) == cli.EXIT_VERDICT
    assert manifest(out, "sweep")["status"] == "failed"


@pytest.mark.parametrize("doc,needle", [
    ({**CIRCLE, "eps": [-0.02]}, "eps"),
    ({**CIRCLE, "domain": {"shape": "blob", "n": [64, 64]}}, "domain.shape"),
])
def test_invalid_config_exits_64(tmp_path, capsys, doc, needle):
    cfg = write(tmp_path, "bad.json", doc)
    assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / "bad")]) == cli.EXIT_USAGE
    assert needle in capsys.readouterr().err
    assert manifest(tmp_path / "bad", "sweep")["status"] == "invalid"


@pytest.mark.parametrize("argv", [
    ["frobnicate"],
    ["sweep", "--jobs", "0"],
    ["sweep", "--seed", "-1"],
    ["sweep", "--tol-scale", "abc"],
    ["check-variations", "--unknown-flag"],
])
def test_usage_errors_exit_64(argv):
    assert cli.main(argv) == cli.EXIT_USAGE


def test_execution_error_exits_1(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise cp.ConvergenceError("Newton did not converge", 1.0)

    monkeypatch.setattr(ex, "critical_point", boom)
    cfg = write(tmp_path, "ok.json", LAMELLA_OK)
    out = tmp_path / "solve"
    assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == cli.EXIT_ERROR
    assert manifest(out, "solve")["status"] == "error"


def test_solve_and_spectrum(tmp_path):
    cfg = write(tmp_path, "ok.json", LAMELLA_OK)
    out = tmp_path / "run"
    assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == cli.EXIT_OK
    side = json.loads((out / "u_eps0p1.json").read_text())
    assert side["residual_norm"] < 1e-8 and abs(side["lagrange_multiplier"]) < 1e-8
    assert (out / "u_eps0p1.fld").exists()
    assert cli.main(["spectrum", "--config", cfg, "--out", str(out)]) == cli.EXIT_OK
    assert header(out / "spectrum.csv") == cli.SPECTRUM_COLUMNS
    with open(out / "spectrum.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 3


def test_green(tmp_path):
    doc = {"domain": {"shape": "rectangle", "L": [1.0, 1.0], "n": [129, 129]},
           "interface": {"kind": "segment", "x": 0.5}, "eps": [0.05],
           "probes": {"xi": [{"kind": "const"}]}}
    out = tmp_path / "green"
    assert cli.main(["green", "--config", write(tmp_path, "g.json", doc), "--out", str(out)]) == cli.EXIT_OK
    assert header(out / "green.csv") == cli.GREEN_COLUMNS


def test_version_and_help(capsys):
    assert cli.main(["--version"]) == 0
    assert "sharplab" in capsys.readouterr().out
    assert cli.main(["sweep", "--help"]) == 0


@pytest.mark.skipif(shutil.which("sharplab") is None, reason="console script not installed")
def test_console_script_runs(tmp_path):
    proc = subprocess.run(["sharplab", "check-variations", "--probes", "1", "--n", "24",
                           "--out", str(tmp_path / "cs")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "sharplab.cli", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 64
