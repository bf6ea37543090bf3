import json
import math
import os
import subprocess
import sys
from pathlib import Path

import pytest

from apchern import cli
from apchern.errors import ConfigInvalid

ROOT = Path(__file__).resolve().parents[1]


def write_ini(path, text):
    path.write_text(text)
    return path


def run_main(argv):
    return cli.main([str(a) for a in argv])


# --- validate ----------------------------------------------------------------------------------

def test_validate_empty_file_is_an_error(tmp_path):
    cfg = write_ini(tmp_path / "empty.ini", "")
    with pytest.raises(ConfigInvalid):
        cli.validate(cfg)
    assert run_main(["validate", cfg]) == cli.EXIT_INVALID


def test_validate_minimal_config_passes(tmp_path, capsys):
    cfg = write_ini(tmp_path / "min.ini", "[run]\nexperiment = verify\n")
    report = cli.validate(cfg)
    assert report["valid"] and report["unknown_keys"] == [] and report["errors"] == []
    assert run_main(["validate", cfg]) == cli.EXIT_OK
    assert json.loads(capsys.readouterr().out)["valid"]


def test_validate_names_misspelled_key(tmp_path):
    cfg = write_ini(tmp_path / "typo.ini", "[pattern]\nd_mn = 0.8\nseed = 1\n")
    report = cli.validate(cfg)
    assert not report["valid"]
    assert report["unknown_keys"] == ["pattern.d_mn"]
    assert "d_mn" in report["errors"][0]


def test_validate_key_in_wrong_section(tmp_path):
    cfg = write_ini(tmp_path / "sec.ini", "[model]\nseed = 1\n")
    report = cli.validate(cfg)
    assert not report["valid"]
    assert "belongs in [pattern]" in report["unknown_keys"][0]


def test_validate_reports_constraint_violations(tmp_path):
    cfg = write_ini(tmp_path / "bad.ini", "[geometry]\nL = 2\n[sweep]\nef_steps = 0\n")
    report = cli.validate(cfg)
    assert not report["valid"]
    assert "L must be at least 4" in report["errors"][0]
    assert "Fermi-energy grid is empty" in report["errors"][0]


def test_shipped_configs_validate():
    configs = sorted((ROOT / "configs").glob("*.ini"))
    assert configs
    for path in configs:
        report = cli.validate(path)
        assert report["valid"], (path.name, report)


# --- precedence ---------------------------------------------------------------------------------

def test_precedence_flag_env_file_default(tmp_path):
    cfg = write_ini(tmp_path / "p.ini", "[geometry]\nL = 30\n[pattern]\nseed = 4\nd_min = 0.7\n")
    env = {"APC_SEED": "5", "APC_BETA": "2.5"}
    c = cli.load_config(cfg, {"seed": "6"}, environ=env)
    assert c.seed == 6          # flag beats env and file
    assert c.beta == 2.5        # env beats default
    assert c.L == 30.0          # file beats default
    assert c.d_min == 0.7
    assert c.threads == 1       # default
    c = cli.load_config(cfg, {}, environ=env)
    assert c.seed == 5          # env beats file


def test_env_override_through_main(tmp_path, monkeypatch):
    monkeypatch.setenv("APC_L", "6")
    monkeypatch.setenv("APC_D_MIN", "0.7")
    out = tmp_path / "o"
    assert run_main(["run", "--experiment", "verify", "--out", out]) == cli.EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["L"] == 6.0 and manifest["config"]["d_min"] == 0.7


def test_dashed_flags_and_bad_values(tmp_path):
    out = tmp_path / "o"
    assert run_main(["run", "--experiment", "generate", "--L", 6, "--d-min", 0.7,
                     "--seed", 3, "--out", out]) == cli.EXIT_OK
    assert json.loads((out / "manifest.json").read_text())["pattern"]["seed"] == 3
    assert run_main(["run", "--L", "six", "--out", out]) == cli.EXIT_INVALID


def test_defaults_flux_grid_reaches_half_L():
    c = cli.RunConfig(L=20).check()
    assert c.flux_indices() == list(range(0, 11))
    c = cli.RunConfig(L=20, theta=8 * math.pi / 20).check()
    assert c.flux_indices() == [2]


# --- run ----------------------------------------------------------------------------------------

def test_verify_run_writes_report_and_manifest(tmp_path):
    out = tmp_path / "v"
    assert run_main(["run", "--experiment", "verify", "--L", 8, "--d-min", 0.7,
                     "--out", out]) == cli.EXIT_OK
    report = json.loads((out / "delone.json").read_text())
    assert report["is_delone"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest) >= {"config", "calibration", "versions", "wall_time_s", "outputs",
                             "warnings", "pattern"}
    assert manifest["calibration"]["chern_sign"] == -1
    assert set(manifest["outputs"]) == {"delone.json", "points.csv", "plot.gp"}
    assert manifest["pattern"]["fingerprint"]


def test_invalid_config_exit_code(tmp_path, capsys):
    assert run_main(["run", "--experiment", "nope", "--out", tmp_path / "x"]) == cli.EXIT_INVALID
    assert "experiment must be one of" in capsys.readouterr().err
    assert run_main(["run", "--experiment", "spectrum", "--d", 1,
                     "--out", tmp_path / "x"]) == cli.EXIT_INVALID
    assert run_main(["run", "--gap-method", "magic", "--out", tmp_path / "x"]) == cli.EXIT_INVALID


def test_unwritable_output_is_invalid(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run_main(["run", "--L", 6, "--d-min", 0.7, "--out", blocker]) == cli.EXIT_INVALID
    assert "not writable" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, capsys):
    # the uniform lattice chain with 4 cells has a zero mode
    code = run_main(["run", "--experiment", "winding", "--d", 1, "--L", 8, "--lattice", "true",
                     "--delta", "0", "--out", tmp_path / "w"])
    assert code == cli.EXIT_NUMERICAL
    err = capsys.readouterr().err
    assert "numerical failure in apchern.invariants" in err and "GaplessAtZero" in err


def test_snapped_theta_warning_recorded_once(tmp_path, capsys):
    out = tmp_path / "c"
    assert run_main(["run", "--experiment", "chern", "--L", 10, "--d-min", 0.7, "--theta", 1.5,
                     "--onsite", 0, "--out", out]) == cli.EXIT_OK
    err = capsys.readouterr().err
    assert err.count("FluxNotQuantizedWarning") == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["warnings"]) == 1 and "snapped" in manifest["warnings"][0]
    rows = (out / "chern.csv").read_text().splitlines()
    assert rows[0] == "n,theta,E_F,sigma_H,nearest_int,deviation,gap_width,sobolev_01_2"
    assert rows[1].startswith("1,")


def test_spectrum_gap_options(tmp_path):
    for method in ("spacing", "density"):
        out = tmp_path / method
        assert run_main(["run", "--experiment", "spectrum", "--L", 10, "--d-min", 0.7,
                         "--flux-max", 2, "--gap-method", method, "--gap-trim", 0.02,
                         "--gap-levels", 4, "--out", out]) == cli.EXIT_OK
        gaps = (out / "gaps.csv").read_text().splitlines()
        butterfly = (out / "butterfly.csv").read_text().splitlines()
        assert len(butterfly) == 1 + 3 * 100
        assert len(gaps) >= 2
        assert json.loads((out / "manifest.json").read_text())["config"]["gap_method"] == method


def test_winding_and_residue_outputs(tmp_path):
    out = tmp_path / "w"
    assert run_main(["run", "--experiment", "winding", "--d", 1, "--L", 60, "--d-min", 0.6,
                     "--beta", 1, "--delta", "0.5,-0.5", "--out", out]) == cli.EXIT_OK
    rows = [r.split(",") for r in (out / "winding.csv").read_text().splitlines()[1:]]
    assert [int(r[2]) for r in rows] == [1, -1]
    assert [int(r[4]) for r in rows] == [1, -1]
    out = tmp_path / "r"
    assert run_main(["run", "--experiment", "residue", "--L", 30, "--out", out]) == cli.EXIT_OK
    rows = [r.split(",") for r in (out / "residue.csv").read_text().splitlines()[1:]]
    assert [r[0] for r in rows] == ["unit", "random_positive"]
    assert all(float(r[3]) < 0.05 for r in rows)


@pytest.mark.parametrize("argv", [
    ["--experiment", "generate", "--L", 8, "--d-min", 0.7],
    ["--experiment", "map", "--L", 8, "--d-min", 0.7, "--flux-max", 2, "--ef-min", -1,
     "--ef-max", 1, "--ef-steps", 3, "--threads", 2],
])
def test_identical_runs_give_identical_csv(tmp_path, argv):
    for name in ("a", "b"):
        assert run_main(["run", *argv, "--out", tmp_path / name]) == cli.EXIT_OK
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert csvs
    for name in csvs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point(tmp_path):
    cfg = write_ini(tmp_path / "m.ini", "[run]\nexperiment = verify\n")
    proc = subprocess.run([sys.executable, "-m", "apchern", "validate", str(cfg)],
                          capture_output=True, text=True, env={**os.environ})
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["valid"]
