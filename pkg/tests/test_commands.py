"""End-to-end tests of the command line on a small configuration."""

import json
from pathlib import Path

import pandas as pd
import pytest
import torch
import yaml
from typer.testing import CliRunner, Result

from placekit.app.api import commands
from placekit.app.errors import InvalidConfig
from placekit.app.main import create_app
from placekit.app.models import ExperimentConfig
from tests.conftest import small_config_dict

runner = CliRunner()


def _run(command: str, config: Path, out: Path, *extra: str) -> Result:
    return runner.invoke(
        create_app(), [command, "--config", str(config), "--out", str(out), *extra]
    )


def _write_config(path: Path, document: dict[str, object]) -> Path:
    path.write_text(yaml.safe_dump(document), encoding="utf-8")
    return path


@pytest.fixture
def fitted_run(config_file: Path, tmp_path: Path) -> Path:
    """Output root holding the environment, GP fits and a trained neural process."""
    out = tmp_path / "runs"
    for command in ("gen-env", "fit-gp", "train-np"):
        result = _run(command, config_file, out)
        assert result.exit_code == 0, result.output
    return out


def test_missing_seed_is_a_config_error(tmp_path: Path) -> None:
    """Test that an unseeded config exits with code 2 and names the field."""
    config = _write_config(tmp_path / "unseeded.yaml", small_config_dict(seed=None))

    result = _run("gen-env", config, tmp_path / "runs")

    assert result.exit_code == 2
    assert "environment.seed" in result.output


def test_seed_option_supplies_the_seed(tmp_path: Path) -> None:
    """Test that --seed completes an unseeded config."""
    config = _write_config(tmp_path / "unseeded.yaml", small_config_dict(seed=None))
    out = tmp_path / "runs"

    result = _run("gen-env", config, out, "--seed", "5")

    assert result.exit_code == 0, result.output
    manifest = json.loads((out / "gen-env" / "manifest.json").read_text())
    assert manifest["seed"] == 5
    assert "environment.npsp" in manifest["artifacts"]


def test_missing_config_file(tmp_path: Path) -> None:
    """Test that an unreadable config exits with code 2."""
    result = _run("gen-env", tmp_path / "absent.yaml", tmp_path / "runs")

    assert result.exit_code == 2


def test_unknown_section_is_rejected(tmp_path: Path) -> None:
    """Test that typos in section names are configuration errors."""
    document = small_config_dict() | {"placment": {"k": 2}}
    config = _write_config(tmp_path / "typo.yaml", document)

    result = _run("gen-env", config, tmp_path / "runs")

    assert result.exit_code == 2
    assert "placment" in result.output


def test_missing_checkpoint_is_a_runtime_error(config_file: Path, tmp_path: Path) -> None:
    """Test that evaluating before fitting exits with code 1."""
    result = _run("eval-sweep", config_file, tmp_path / "runs")

    assert result.exit_code == 1
    assert "fit-gp" in result.output


def test_gen_env_writes_maps(config_file: Path, tmp_path: Path) -> None:
    """Test the environment artifacts and the metrics snapshot."""
    out = tmp_path / "runs"

    result = _run("gen-env", config_file, out)

    assert result.exit_code == 0, result.output
    directory = out / "gen-env"
    assert (directory / "lengthscale_1.svg").exists()
    assert len(pd.read_csv(directory / "mask.csv")) == 64
    assert "placekit_command_duration_seconds" in (directory / "metrics.prom").read_text()


def test_eval_sweep_rows(fitted_run: Path, config_file: Path) -> None:
    """Test one sweep row per (model, number of context points)."""
    result = _run("eval-sweep", config_file, fitted_run)

    assert result.exit_code == 0, result.output
    sweep = pd.read_csv(fitted_run / "eval-sweep" / "sweep.csv")
    assert len(sweep) == 9
    assert set(sweep["model"]) == {"eq", "gibbs", "np"}
    assert sorted(set(sweep["n_context"])) == [0, 5, 10]
    pit = pd.read_csv(fitted_run / "eval-sweep" / "pit.csv")
    assert len(pit) == 9 * 20


def test_place_with_no_sensors(fitted_run: Path, tmp_path: Path) -> None:
    """Test that K = 0 writes a baseline-only plan."""
    document = small_config_dict()
    placement = document["placement"]
    assert isinstance(placement, dict)
    placement["k"] = 0
    config = _write_config(tmp_path / "k0.yaml", document)

    result = _run("place", config, fitted_run)

    assert result.exit_code == 0, result.output
    plan = pd.read_csv(fitted_run / "place" / "eq_DeltaVar_plan.csv")
    assert plan["step"].tolist() == [0]
    metrics = pd.read_csv(fitted_run / "place" / "placement_metrics.csv")
    assert set(metrics["k"]) == {0}


def test_place_writes_plans_and_manifest(fitted_run: Path, config_file: Path) -> None:
    """Test the placement artifacts for K = 2."""
    result = _run("place", config_file, fitted_run)

    assert result.exit_code == 0, result.output
    directory = fitted_run / "place"
    plan = pd.read_csv(directory / "eq_DeltaVar_plan.csv")
    assert plan["step"].tolist() == [0, 1, 2]
    manifest = json.loads((directory / "manifest.json").read_text())
    assert manifest["command"] == "place"
    assert "eq_DeltaVar_field.svg" in manifest["artifacts"]
    assert len(manifest["config_sha256"]) == 64


def test_oracle_correlation_table(fitted_run: Path, config_file: Path) -> None:
    """Test one correlation row per (acquisition kind, oracle kind)."""
    result = _run("oracle-corr", config_file, fitted_run)

    assert result.exit_code == 0, result.output
    table = pd.read_csv(fitted_run / "oracle-corr" / "correlation.csv")
    assert len(table) == 3 * 3
    assert (table["pearson_lo"] <= table["pearson_r"]).all()
    assert (table["pearson_r"] <= table["pearson_hi"]).all()


def test_pareto_ranks(fitted_run: Path, config_file: Path) -> None:
    """Test that every search site gets a rank and rank 1 is non-empty."""
    result = _run("pareto", config_file, fitted_run)

    assert result.exit_code == 0, result.output
    table = pd.read_csv(fitted_run / "pareto" / "pareto.csv")
    assert table["index"].tolist() == list(range(len(table)))
    assert (table["rank"] == 1).any()


def test_plot_emits_maps(fitted_run: Path, config_file: Path) -> None:
    """Test the covariance maps and samples of the plot command."""
    result = _run("plot", config_file, fitted_run)

    assert result.exit_code == 0, result.output
    directory = fitted_run / "plot"
    assert (directory / "eq_covariance_date0.svg").exists()
    assert (directory / "eq_correlation_difference.csv").exists()
    assert (directory / "eq_sample0.svg").exists()


@pytest.mark.parametrize(
    "error",
    [InvalidConfig("k exceeds the search grid"), ValueError("unexpected"), OSError("disk full")],
    ids=["invalid-config", "value-error", "os-error"],
)
def test_pipeline_failures_exit_with_runtime_code(
    config_file: Path, tmp_path: Path, monkeypatch: pytest.MonkeyPatch, error: Exception
) -> None:
    """Test that anything raised after the config has loaded exits with code 1."""

    def failing(config: ExperimentConfig, out_root: Path, threads: int) -> list[Path]:
        raise error

    monkeypatch.setitem(commands.PIPELINES, "gen-env", failing)

    result = _run("gen-env", config_file, tmp_path / "runs")

    assert result.exit_code == 1
    assert str(error) in result.output


def test_threads_option_caps_torch(
    config_file: Path, tmp_path: Path, monkeypatch: pytest.MonkeyPatch
) -> None:
    """Test that --threads bounds torch during the run and is restored afterwards."""
    seen: list[int] = []

    def recording(config: ExperimentConfig, out_root: Path, threads: int) -> list[Path]:
        seen.extend([threads, torch.get_num_threads()])
        return []

    monkeypatch.setitem(commands.PIPELINES, "gen-env", recording)
    before = torch.get_num_threads()

    result = _run("gen-env", config_file, tmp_path / "runs", "--threads", "1")

    assert result.exit_code == 0, result.output
    assert seen == [1, 1]
    assert torch.get_num_threads() == before
