"""Test configuration and fixtures."""

from pathlib import Path
from unittest.mock import MagicMock

import numpy as np
import pytest
import yaml

from placekit.app.models import (
    ContextSet,
    EnvironmentConfig,
    EQParams,
    NPArchitecture,
    SyntheticEnvironment,
    Task,
)
from placekit.app.services.environment import build_environment
from placekit.app.services.gp import GPModel
from placekit.app.services.neural_process import NPModel

# Test constants
SMALL_GRID = 8
SMALL_SEED = 3


@pytest.fixture(autouse=True)
def disable_telemetry(monkeypatch: pytest.MonkeyPatch) -> None:
    """Disable OpenTelemetry for all tests.

    This prevents test runs from generating telemetry data and
    attempting to connect to external services.

    Args:
        monkeypatch: pytest's monkeypatch fixture for modifying values.
    """
    monkeypatch.setenv("OTEL_ENABLED", "false")
    monkeypatch.setenv("OTEL_EXPORTER_OTLP_ENDPOINT", "")
    monkeypatch.setenv("OTEL_TRACES_SAMPLER", "always_off")
    monkeypatch.setenv("OTEL_TRACES_EXPORTER", "none")

    from placekit.app import telemetry
    from placekit.app.config import settings

    monkeypatch.setattr(telemetry, "setup_telemetry", MagicMock())
    monkeypatch.setattr(telemetry, "shutdown_telemetry", MagicMock())
    monkeypatch.setattr(settings, "OTEL_ENABLED", False)

    # Reset telemetry global state to prevent cross-test contamination
    telemetry._tracer_provider = None
    telemetry._span_processors.clear()
    telemetry._is_setup_complete = False


@pytest.fixture(scope="session")
def small_env_config() -> EnvironmentConfig:
    """An 8x8, one-year environment config."""
    return EnvironmentConfig(grid_size=SMALL_GRID, seed=SMALL_SEED, years=1)


@pytest.fixture(scope="session")
def small_env(small_env_config: EnvironmentConfig) -> SyntheticEnvironment:
    """Environment built once per session from :func:`small_env_config`."""
    return build_environment(small_env_config)


@pytest.fixture(scope="session")
def tiny_architecture() -> NPArchitecture:
    """A neural process small enough for unit tests."""
    return NPArchitecture(ppu=4, channels=4, levels=1, rank=3, head_hidden=8, init_seed=1)


@pytest.fixture
def tiny_np(tiny_architecture: NPArchitecture) -> NPModel:
    """Untrained tiny neural process."""
    return NPModel(tiny_architecture)


@pytest.fixture
def eq_model() -> GPModel:
    """EQ GP with unit variance and small noise."""
    return GPModel(
        "eq", EQParams(variance=1.0, noise_var=0.01, lengthscale_1=0.4, lengthscale_2=0.3)
    )


def observation_task(
    context_locations: np.ndarray,
    context_values: np.ndarray,
    target_locations: np.ndarray,
    env: SyntheticEnvironment | None = None,
    date_index: int = 0,
) -> Task:
    """Task with the given observations; the auxiliary grid comes from ``env`` if given."""
    observations = ContextSet(
        locations=np.asarray(context_locations, dtype=np.float64).reshape(-1, 2),
        values=np.asarray(context_values, dtype=np.float64).reshape(-1, 1),
    )
    contexts = [observations]
    if env is not None:
        from placekit.app.services.environment import auxiliary_context

        contexts.append(auxiliary_context(env, date_index))
    return Task(date_index=date_index, contexts=contexts, target_locations=target_locations)


def small_config_dict(seed: int | None = SMALL_SEED) -> dict[str, object]:
    """Experiment config sized for end-to-end command tests."""
    environment: dict[str, object] = {"grid_size": SMALL_GRID, "years": 1}
    if seed is not None:
        environment["seed"] = seed
    return {
        "environment": environment,
        "tasks": {"nc_min": 2, "nc_max": 10, "nt_min": 10, "nt_max": 20},
        "gp": {
            "variants": ["eq", "gibbs"],
            "max_epochs": 3,
            "n_train_tasks": 4,
            "n_val_tasks": 2,
            "n_context": 20,
            "basis_per_side": 3,
        },
        "np": {
            "architecture": {"ppu": 4, "channels": 4, "levels": 1, "rank": 3, "head_hidden": 8},
            "training": {"max_epochs": 1, "tasks_per_epoch": 2, "n_val_tasks": 2},
        },
        "sweep": {
            "models": ["eq", "gibbs", "np"],
            "n_context": [0, 5, 10],
            "n_targets": 16,
            "tasks_per_setting": 2,
        },
        "placement": {
            "models": ["eq"],
            "kinds": ["DeltaVar", "ContextDist", "Random"],
            "k": 2,
            "n_test_dates": 2,
            "oracle_dates": 2,
            "search_stride": 2,
            "n_stations": 3,
            "random_seeds": 2,
            "bootstrap_resamples": 50,
            "pareto_model": "eq",
        },
        "plot": {"models": ["eq"], "dates": [0, 90], "n_samples": 1},
    }


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    """Small experiment config written to a temporary YAML file."""
    path = tmp_path / "experiment.yaml"
    path.write_text(yaml.safe_dump(small_config_dict()), encoding="utf-8")
    return path
