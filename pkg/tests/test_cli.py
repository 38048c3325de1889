import pytest
from typer.testing import CliRunner

from kamlattice.cli import app
from kamlattice.storage.local.artifacts import ARTIFACTS, read_json, write_json
from kamlattice.storage.local.config import config_hash, load_config
from kamlattice.workflows.experiment import run_experiment
from kamlattice.workflows.replay import replay

runner = CliRunner()


def test_missing_config_exits_with_2(tmp_path):
    result = runner.invoke(app, ["run", "--config", str(tmp_path / "missing.toml")])
    assert result.exit_code == 2


def test_invalid_option_exits_with_2():
    result = runner.invoke(app, ["run", "--epsilon0", "2.0", "-q"])
    assert result.exit_code == 2


def test_replay_of_missing_directory_exits_with_2(tmp_path):
    result = runner.invoke(app, ["replay", str(tmp_path / "nothing")])
    assert result.exit_code == 2


def test_invalid_candidate_exits_with_2():
    result = runner.invoke(app, ["check-assumptions", "-r", "6", "-J", "not json", "-q"])
    assert result.exit_code == 2


def test_normal_form_command_writes_artifact(tmp_path):
    out = tmp_path / "nf"
    result = runner.invoke(app, ["normal-form", "-r", "6", "-o", str(out)])
    assert result.exit_code == 0
    meta, data = read_json(out / "normal_form.json")
    assert set(data) == {"package", "reduced"}
    assert "cubic_cancellation" in result.output


def _small_config(tmp_path):
    return load_config(overrides={
        "model": {"radius": 6},
        "schedule": {"steps": 1},
        "solver": {"excise": False},
        "sampling": {"parameters": 16, "tracked": 1, "grid": 8, "audit_samples": 2},
        "acceptance": {"horizon": 10.0, "dt": 0.1},
        "output_dir": str(tmp_path / "run"),
    })


@pytest.mark.slow
def test_run_then_replay(tmp_path):
    config = _small_config(tmp_path)
    result = run_experiment(config)
    for name in ARTIFACTS:
        assert (result.output_dir / name).exists(), name
    meta, _ = read_json(result.output_dir / "audits.json")
    assert meta["config_hash"] == config_hash(config)

    replayed = replay(result.output_dir)
    assert replayed.exit_code == result.exit_code
    assert replayed.checks == result.checks
    assert max(replayed.differences.values()) < 1e-12


@pytest.mark.slow
def test_replay_detects_foreign_artifact(tmp_path):
    config = _small_config(tmp_path)
    result = run_experiment(config)
    other = load_config(overrides={"seed": 99})
    path = result.output_dir / "torus.json"
    _, data = read_json(path)
    write_json(path, data, config_hash(other))
    cli = runner.invoke(app, ["replay", str(result.output_dir), "-q"])
    assert cli.exit_code == 2
