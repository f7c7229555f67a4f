import json

import pytest
from typer.testing import CliRunner

from mems_app.cli import app

runner = CliRunner()


def _summary(out):
    return json.loads((out / "summary.json").read_text(encoding="utf-8"))


def test_help_lists_commands():
    result = runner.invoke(app, ["--help"])
    assert result.exit_code == 0
    for name in ("stationary", "pullin", "bounds", "evolve", "picard", "verify-all"):
        assert name in result.output


def test_bounds_command(tmp_path):
    result = runner.invoke(app, ["bounds", "--grid-n", "100", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    summary = _summary(tmp_path)
    assert summary["mode"] == "bounds"
    assert summary["results"]["upper_1_2"]["applicable"]
    assert (tmp_path / "trace.csv").exists()


def test_stationary_command_writes_field(tmp_path):
    args = ["stationary", "--lambda", "1", "--grid-n", "64", "--seedless", "--out", str(tmp_path)]
    result = runner.invoke(app, args)
    assert result.exit_code == 0, result.output
    assert (tmp_path / "fields" / "v_lambda.csv").exists()
    assert _summary(tmp_path)["config"]["run"]["lambda"] == 1.0


def test_missing_lambda_is_a_config_error(tmp_path):
    result = runner.invoke(app, ["stationary", "--out", str(tmp_path)])
    assert result.exit_code == 1
    assert not (tmp_path / "summary.json").exists()


def test_unknown_config_key_is_a_config_error(tmp_path):
    config = tmp_path / "bad.ini"
    config.write_text("domain.radius = 2\n", encoding="utf-8")
    result = runner.invoke(app, ["bounds", "--config", str(config), "--out", str(tmp_path / "out")])
    assert result.exit_code == 1


def test_hypothesis_failure_exits_with_one(tmp_path):
    config = tmp_path / "zero.ini"
    config.write_text("forcing.amplitude = 0\n", encoding="utf-8")
    args = ["stationary", "--config", str(config), "--lambda", "1", "--grid-n", "32", "--out", str(tmp_path / "out")]
    assert runner.invoke(app, args).exit_code == 1


def test_evolve_command_writes_trace(tmp_path):
    args = ["evolve", "--lambda", "6", "--grid-n", "64", "--t-end", "1", "--out", str(tmp_path)]
    result = runner.invoke(app, args)
    assert result.exit_code == 0, result.output
    assert _summary(tmp_path)["results"]["status"] == "touchdown"
    lines = (tmp_path / "trace.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t,max_u,E,dist_to_ref,dt"
    assert len(lines) > 2


def test_pullin_command(tmp_path):
    args = ["pullin", "--grid-n", "100", "--tol", "1e-2", "--out", str(tmp_path)]
    result = runner.invoke(app, args)
    assert result.exit_code == 0, result.output
    res = _summary(tmp_path)["results"]
    assert res["lambda_hi"] - res["lambda_lo"] <= 1e-2 * res["lambda_hi"]


@pytest.mark.slow
def test_verify_all(tmp_path):
    result = runner.invoke(app, ["verify-all", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    checks = json.loads((tmp_path / "verify.json").read_text(encoding="utf-8"))
    assert checks
