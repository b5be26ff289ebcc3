import io
import json
import contextlib

import pytest

from lagrangeflow.cli import main


def run_cli(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


SMALL = ["--N", "800", "--M", "40", "--seed", "3"]


def test_catalog_command():
    code, out, err = run_cli(["catalog"])
    assert code == 0
    report = json.loads(out)
    assert report["schema_version"] == "1.0"
    assert report["command"] == "catalog"
    assert "config" in report
    names = [row["name"] for row in report["results"]["cases"]]
    assert names == ["frozen_taylor_green", "lamb_oseen", "taylor_green",
                     "taylor_green_rotated", "zero_flow"]
    flags = {row["name"]: row["is_exact_solution"]
             for row in report["results"]["cases"]}
    assert flags["frozen_taylor_green"] is False and flags["lamb_oseen"] is True


def test_residual_command():
    code, out, _ = run_cli(["residual", "--case", "taylor_green"])
    assert code == 0
    results = json.loads(out)["results"]
    assert results["max_abs_residual"] <= 1e-8
    assert results["max_abs_divergence"] <= 1e-10

    code, out, _ = run_cli(["residual", "--case", "frozen_taylor_green",
                            "--grid", "5"])
    assert code == 0
    assert json.loads(out)["results"]["max_abs_residual"] >= 0.5


def test_el_test_command_verdicts():
    code, out, _ = run_cli(["el-test", "--case", "zero_flow"] + SMALL)
    assert code == 0
    report = json.loads(out)
    assert report["results"]["verdict"] == "pass"
    assert report["config"]["N"] == 800 and report["config"]["seed"] == 3

    code, out, _ = run_cli(["el-test", "--case", "frozen_taylor_green",
                            "--N", "4000", "--M", "50", "--seed", "3"])
    assert code == 0
    assert json.loads(out)["results"]["verdict"] == "fail"


def test_action_command():
    code, out, _ = run_cli(["action", "--case", "zero_flow"] + SMALL)
    assert code == 0
    identity = json.loads(out)["results"]["identity"]
    assert identity["S"]["value"] == pytest.approx(-0.5, abs=1e-12)
    assert identity["residual_minus"]["value"] == pytest.approx(0.0, abs=1e-12)


def test_least_action_command():
    code, out, _ = run_cli(["least-action", "--case", "zero_flow"] + SMALL)
    assert code == 0
    results = json.loads(out)["results"]
    assert results["verdict"] == "critical"
    assert len(results["entries"]) >= 9
    code, out, _ = run_cli(["least-action", "--case", "zero_flow",
                            "--dictionary", "deterministic"] + SMALL)
    assert len(json.loads(out)["results"]["entries"]) == 6


def test_noether_command_and_gate():
    code, out, _ = run_cli(["noether", "--case", "taylor_green",
                            "--generator", "translation_e3"] + SMALL)
    assert code == 0
    results = json.loads(out)["results"]
    assert results["verdict"] == "pass"
    assert results["symmetry_check"]["within_gate"] is True

    # gate violations exit with code 3 and still emit the check report
    code, out, _ = run_cli(["noether", "--case", "taylor_green",
                            "--generator", "rotation_e3"] + SMALL)
    assert code == 3
    results = json.loads(out)["results"]
    assert results["verdict"] == "refused"
    assert results["symmetry_check"]["max_pressure_violation"] >= 0.1

    code, out, _ = run_cli(["noether", "--case", "taylor_green_rotated",
                            "--generator", "translation_e3"] + SMALL)
    assert code == 3


def test_noether_ablation_flag():
    args = ["noether", "--case", "lamb_oseen", "--generator", "rotation_e3",
            "--N", "4000", "--M", "50", "--seed", "3"]
    code, out, _ = run_cli(args)
    assert code == 0 and json.loads(out)["results"]["verdict"] == "pass"
    code, out, _ = run_cli(args + ["--ablate-compensator"])
    assert code == 0 and json.loads(out)["results"]["verdict"] == "fail"
    code, _, err = run_cli(["noether", "--case", "taylor_green",
                            "--generator", "translation_e3",
                            "--ablate-compensator"] + SMALL)
    assert code == 2 and "ablate" in err


def test_unknown_case_and_generator_exit_2():
    code, _, err = run_cli(["residual", "--case", "vortex_sheet"])
    assert code == 2 and "unknown case" in err
    code, _, err = run_cli(["noether", "--case", "taylor_green",
                            "--generator", "dilation_e3"] + SMALL)
    assert code == 2 and "unknown generator" in err


def test_invalid_config_exit_2():
    code, _, err = run_cli(["el-test", "--case", "zero_flow", "--alpha", "2.0",
                            "--N", "10", "--M", "4", "--seed", "0"])
    assert code == 2 and "alpha" in err
    code, _, err = run_cli(["el-test", "--case", "zero_flow", "--N", "0",
                            "--M", "4", "--seed", "0"])
    assert code == 2 and "'N'" in err
    code, _, err = run_cli(["el-test"] + SMALL)
    assert code == 2 and "case" in err


def test_capacity_exit_4():
    code, _, err = run_cli(["el-test", "--case", "zero_flow",
                            "--N", str(2**42), "--M", "8", "--seed", "0"])
    assert code == 4 and "bytes" in err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        "# experiment defaults\n"
        "case = zero_flow\n"
        "N = 600\n"
        "M: 30\n"
        "seed = 5\n"
        "alpha = 0.02\n")
    code, out, _ = run_cli(["el-test", "--config", str(cfg)])
    assert code == 0
    conf = json.loads(out)["config"]
    assert conf == conf | {"case": "zero_flow", "N": 600, "M": 30,
                           "seed": 5, "alpha": 0.02}

    code, out, _ = run_cli(["el-test", "--config", str(cfg), "--N", "900"])
    assert json.loads(out)["config"]["N"] == 900

    bad = tmp_path / "bad.cfg"
    bad.write_text("halt_and_catch_fire = 1\n")
    code, _, err = run_cli(["el-test", "--config", str(bad)])
    assert code == 2 and "unknown config key" in err


def test_out_file(tmp_path):
    target = tmp_path / "report.json"
    code, out, _ = run_cli(["residual", "--case", "zero_flow",
                            "--out", str(target)])
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["command"] == "residual"


def test_repeat_runs_bit_identical():
    argv = ["el-test", "--case", "taylor_green"] + SMALL
    outputs = {run_cli(argv)[1] for _ in range(3)}
    assert len(outputs) == 1


def test_suite_command_subset_and_exit_codes():
    code, out, _ = run_cli(["suite", "--only", "1", "--N", "500", "--M", "10",
                            "--seed", "3"])
    assert code == 0
    results = json.loads(out)["results"]
    assert results["passed"] is True
    assert [c["criterion"] for c in results["criteria"]] == [1]

    # far below the calibrated scale the dichotomy criterion cannot reach its
    # z >= 10 requirement, so the suite reports method-level failure (exit 1)
    code, out, _ = run_cli(["suite", "--only", "2", "--N", "400", "--M", "10",
                            "--seed", "3"])
    assert code == 1
    assert json.loads(out)["results"]["passed"] is False

    code, _, err = run_cli(["suite", "--only", "12"])
    assert code == 2 and "criteria" in err
