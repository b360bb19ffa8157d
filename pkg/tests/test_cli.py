import json

import pytest
from typer.testing import CliRunner

from src.main import app
from tests.test_harness import TINY

runner = CliRunner()


def _toml(values: dict) -> str:
    return "".join(f"{key} = {json.dumps(value)}\n" for key, value in values.items())


def test_example_prints_reference_advantage():
    result = runner.invoke(app, ["example"])
    assert result.exit_code == 0, result.output
    assert "A(s1,a1) = -7" in result.output
    assert "A(s1,a2) = 7" in result.output
    assert "reward tilting prefers tau1" in result.output
    assert "advantage tilting prefers tau2" in result.output


def test_verify_small_suite(tmp_path):
    report = tmp_path / "report.json"
    result = runner.invoke(app, ["verify", "--trials", "5", "--identity-instances", "3", "--report", str(report)])
    assert result.exit_code == 0, result.output
    assert "verification passed" in result.output
    assert json.loads(report.read_text())["passed"] is True


def test_unknown_guide_kind_is_rejected(tmp_path):
    result = runner.invoke(app, ["train", "--guide", "ucb", "--out", str(tmp_path)])
    assert result.exit_code != 0


def test_unknown_config_key_is_named(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text('guide.strength = 1.0\n')
    result = runner.invoke(app, ["train", "--config", str(config), "--out", str(tmp_path)])
    assert result.exit_code == 1
    assert "guide.strength" in result.output


def test_train_then_sample_and_eval(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text(_toml(TINY))
    out = tmp_path / "runs"
    result = runner.invoke(app, ["train", "--config", str(config), "--seed", "2", "--out", str(out)])
    assert result.exit_code == 0, result.output
    (checkpoint,) = out.glob("*/seed_2/checkpoint.npz")

    samples = tmp_path / "samples.jsonl"
    result = runner.invoke(app, ["sample", "--checkpoint", str(checkpoint), "--count", "2", "--out", str(samples)])
    assert result.exit_code == 0, result.output
    records = [json.loads(line) for line in samples.read_text().splitlines()]
    assert [r["index"] for r in records] == [0, 1]
    assert records[0]["guide"] == "sag"
    assert len(records[0]["states"]) == TINY["segment.horizon"] + 1

    result = runner.invoke(app, ["eval", "--checkpoint", str(checkpoint), "--episodes", "1"])
    assert result.exit_code == 0, result.output
    assert "single episode" in result.output


@pytest.mark.parametrize("command", ["train", "compare", "verify", "example", "sample", "eval", "serve"])
def test_commands_have_help(command):
    assert runner.invoke(app, [command, "--help"]).exit_code == 0
