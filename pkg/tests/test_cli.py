import json

import numpy as np
import pytest

from quantid import dataio
from quantid.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, EXIT_PE, main
from quantid.linalg import LtiModel, save_model


def run(*argv):
    return main([str(a) for a in argv])


def test_simulate_dc_protocol(tmp_path):
    assert run("--out", tmp_path, "simulate", "--preset", "dc_motor", "--trajectories", 150, "--steps", 100, "--seed", 0) == EXIT_OK
    lines = (tmp_path / "data.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t,x1,x2,x3,u1,u2"
    assert len(lines) == 1 + 150 * 101
    manifest = dataio.read_json(tmp_path / "manifest.json")
    assert manifest["T"] == 15000
    assert dataio.read_json(tmp_path / "config.json")["command"] == "simulate"


def test_simulate_tiny(tmp_path):
    assert run("--out", tmp_path, "simulate", "--preset", "mass_spring_damper", "--trajectories", 1, "--steps", 2, "--seed", 1) == EXIT_OK
    assert len(dataio.read_trajectories_csv(tmp_path / "data.csv")[0][0].T) == 3


def test_simulate_custom_model(tmp_path):
    save_model(LtiModel(np.array([[0.5]]), np.array([[1.0]])), tmp_path / "custom.json")
    out = tmp_path / "o"
    assert run("--out", out, "simulate", "--model", tmp_path / "custom.json", "--trajectories", 2, "--steps", 3) == EXIT_OK
    ((x, u), _) = dataio.read_trajectories_csv(out / "data.csv")
    np.testing.assert_allclose(x[:, 1:], 0.5 * x[:, :-1] + u)


def test_default_output_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("QUANTID_OUT", str(tmp_path / "env"))
    assert run("simulate", "--trajectories", 1, "--steps", 2) == EXIT_OK
    assert (tmp_path / "env" / "data.csv").exists()


def test_stage_by_stage(tmp_path):
    d = tmp_path
    assert run("--out", d / "s", "simulate", "--preset", "mass_spring_damper") == EXIT_OK
    assert run("--out", d / "q", "quantize", "--data", d / "s/data.csv", "--bits", 12, "--preset", "mass_spring_damper") == EXIT_OK
    assert run("--out", d / "i", "identify", "--data", d / "q/quantized.csv") == EXIT_OK
    assert run("--out", d / "b", "bound", "--data", d / "q/quantized.csv", "--model", d / "i/model.json",
               "--quantizer", d / "q/quantizer.json") == EXIT_OK
    assert run("--out", d / "c", "synthesize", "--model", d / "i/model.json", "--bound", d / "b/bound.json", "--x0", "1,0") == EXIT_OK
    assert run("--out", d / "v", "verify", "--controller", d / "c/controller.json", "--model", d / "i/model.json") == EXIT_OK
    assert dataio.read_json(d / "v/verify.json")["audit"]["violations"] == 0


def test_pipeline_dc_b14(tmp_path):
    assert run("--out", tmp_path, "pipeline", "--preset", "dc_motor", "--bits", 14) == EXIT_OK
    controller = dataio.read_json(tmp_path / "controller.json")
    assert np.array(controller["K"]).shape == (2, 3)
    ver = dataio.read_json(tmp_path / "verify.json")
    assert ver["spec_radius"] < 1
    assert ver["finite_cost"] <= ver["guaranteed_cost"]
    assert ver["final_state_norm"] < 1e-6


def test_pipeline_pe_violation(tmp_path):
    assert run("--out", tmp_path, "pipeline", "--preset", "dc_motor", "--bits", 1) == EXIT_PE
    err = dataio.read_json(tmp_path / "error.json")
    assert err["stage"] == "bound" and err["exit_code"] == EXIT_PE


def test_pipeline_rho_override_infeasible(tmp_path):
    assert run("--out", tmp_path, "pipeline", "--preset", "mass_spring_damper", "--bits", 12, "--rho", 1e6) == EXIT_INFEASIBLE
    assert dataio.read_json(tmp_path / "error.json")["stage"] == "synthesize"


def test_io_and_config_errors(tmp_path):
    assert run("--out", tmp_path, "identify", "--data", tmp_path / "missing.csv") == EXIT_IO
    (tmp_path / "junk.json").write_text("{}", encoding="utf-8")
    assert run("--out", tmp_path, "synthesize", "--model", tmp_path / "junk.json", "--rho", 0.1) == EXIT_CONFIG
    with pytest.raises(SystemExit) as info:
        run("pipeline", "--bits", "many")
    assert info.value.code == EXIT_CONFIG


def test_config_replay_is_bit_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("--out", a, "pipeline", "--preset", "mass_spring_damper", "--bits", 12, "--samples", 100) == EXIT_OK
    assert run("--out", b, "--config", a / "config.json") == EXIT_OK
    for f in sorted(a.iterdir()):
        if f.name != "config.json":
            assert f.read_bytes() == (b / f.name).read_bytes(), f.name


def test_experiment_sanity(tmp_path, capsys):
    assert run("--out", tmp_path, "experiment", "--preset", "mass_spring_damper", "--bits", "52",
               "--repetitions", 1, "--samples", 50) == EXIT_OK
    rows = dataio.read_results_csv(tmp_path / "results.csv")
    assert rows[0]["rel_err_A"] <= 1e-8
    for name in ("summary.json", "panels.svg", "phase_portraits.svg", "config.json"):
        assert (tmp_path / name).exists()
    assert (tmp_path / "panels.svg").read_text(encoding="utf-8").lstrip().startswith("<?xml")


def test_experiment_prints_slopes(tmp_path, capsys):
    assert run("--out", tmp_path, "experiment", "--preset", "mass_spring_damper", "--bits", "10,12",
               "--repetitions", 2, "--samples", 20, "--no-plots") == EXIT_OK
    out = capsys.readouterr().out
    assert "slope_rel_err_A" in out
    summary = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
    assert set(summary["per_bits"]) == {"10", "12"}
