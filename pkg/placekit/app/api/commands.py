"""Command-line subcommands.

Each subcommand loads the experiment config, runs its pipeline into
``<out>/<command>/`` and finishes with a manifest and a metrics snapshot.
A configuration that cannot be loaded exits with code 2; any failure once
the pipeline runs exits with code 1.
"""

import logging
from collections.abc import Iterator
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Annotated, Callable, Optional

import torch
import typer
import yaml
from pydantic import ValidationError

from placekit.app.config import settings
from placekit.app.errors import InvalidConfig
from placekit.app.models.experiment_config import ExperimentConfig
from placekit.app.prometheus import export_metrics, track_command
from placekit.app.services.experiments import (
    PIPELINES,
    config_fingerprint,
    describe_config_error,
    load_experiment_config,
)
from placekit.app.services.reporting import build_manifest, write_manifest
from placekit.app.telemetry import annotate_run, trace_method

logger = logging.getLogger(__name__)

EXIT_RUNTIME_ERROR = 1
EXIT_CONFIG_ERROR = 2

Pipeline = Callable[[ExperimentConfig, Path, int], list[Path]]

ConfigOption = Annotated[
    Path, typer.Option("--config", "-c", help="Experiment configuration (YAML).")
]
OutOption = Annotated[
    Optional[Path],
    typer.Option("--out", "-o", help="Output root; defaults to PLACEKIT_OUT or output.directory."),
]
SeedOption = Annotated[
    Optional[int], typer.Option("--seed", min=0, help="Override environment.seed.")
]
ThreadsOption = Annotated[
    Optional[int], typer.Option("--threads", min=1, help="Cap on worker threads.")
]


def _config_error(exc: Exception) -> typer.Exit:
    typer.echo(f"configuration error:\n{describe_config_error(exc)}", err=True)
    return typer.Exit(code=EXIT_CONFIG_ERROR)


def _resolve_out(out: Path | None, config: ExperimentConfig) -> Path:
    if out is not None:
        return out
    if config.output.directory:
        return Path(config.output.directory)
    return Path(settings.PLACEKIT_OUT)


@contextmanager
def torch_threads(count: int) -> Iterator[None]:
    """Cap torch's intra-op thread pool for the duration of a run."""
    previous = torch.get_num_threads()
    torch.set_num_threads(count)
    try:
        yield
    finally:
        torch.set_num_threads(previous)


def execute(
    command: str,
    config_path: Path,
    out: Path | None,
    seed: int | None,
    threads: int | None,
) -> Path:
    """Run one pipeline end to end and return its run directory.

    Raises:
        typer.Exit: With code 2 if the configuration cannot be loaded, 1 if
            the pipeline fails.
    """
    started = datetime.now(timezone.utc)
    try:
        config = load_experiment_config(config_path, seed)
    except (InvalidConfig, ValidationError, yaml.YAMLError, OSError) as exc:
        raise _config_error(exc) from exc

    annotate_run(command, config.environment.seed, config_fingerprint(config))
    out_root = _resolve_out(out, config)
    n_threads = threads or settings.threads
    directory = out_root / command
    pipeline: Pipeline = PIPELINES[command]
    logger.info("Running %s into %s with %d threads", command, directory, n_threads)
    try:
        with torch_threads(n_threads), track_command(command):
            artifacts = pipeline(config, out_root, n_threads)
        metrics_path = export_metrics(directory / "metrics.prom")
        if metrics_path is not None:
            artifacts.append(metrics_path)
        manifest = build_manifest(
            command,
            config.model_dump(mode="json"),
            config.environment.seed,
            n_threads,
            started,
            artifacts,
            directory,
        )
        write_manifest(manifest, directory)
    except Exception as exc:
        logger.exception("%s failed", command)
        typer.echo(f"error: {exc}", err=True)
        raise typer.Exit(code=EXIT_RUNTIME_ERROR) from exc

    logger.info("%s finished: %d artifacts", command, len(manifest.artifacts))
    return directory


@trace_method("gen_env")
def gen_env(
    config: ConfigOption,
    out: OutOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
) -> None:
    """Build the synthetic environment and write its maps and checkpoint."""
    execute("gen-env", config, out, seed, threads)


@trace_method("fit_gp")
def fit_gp(
    config: ConfigOption,
    out: OutOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
) -> None:
    """Fit the GP baselines."""
    execute("fit-gp", config, out, seed, threads)


@trace_method("train_np")
def train_np(
    config: ConfigOption,
    out: OutOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
) -> None:
    """Train the convolutional neural process."""
    execute("train-np", config, out, seed, threads)


@trace_method("eval_sweep")
def eval_sweep(
    config: ConfigOption,
    out: OutOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
) -> None:
    """Evaluate models over the ladder of context sizes."""
    execute("eval-sweep", config, out, seed, threads)


@trace_method("place")
def place(
    config: ConfigOption,
    out: OutOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
) -> None:
    """Run greedy placement and evaluate the plans on held-out dates."""
    execute("place", config, out, seed, threads)


@trace_method("oracle_corr")
def oracle_corr(
    config: ConfigOption,
    out: OutOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
) -> None:
    """Correlate acquisition fields with oracle fields."""
    execute("oracle-corr", config, out, seed, threads)


@trace_method("pareto")
def pareto(
    config: ConfigOption,
    out: OutOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
) -> None:
    """Rank search sites on informativeness versus cost."""
    execute("pareto", config, out, seed, threads)


@trace_method("plot")
def plot(
    config: ConfigOption,
    out: OutOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
) -> None:
    """Emit covariance maps and predictive samples."""
    execute("plot", config, out, seed, threads)


COMMANDS: dict[str, Callable[..., None]] = {
    "gen-env": gen_env,
    "fit-gp": fit_gp,
    "train-np": train_np,
    "eval-sweep": eval_sweep,
    "place": place,
    "oracle-corr": oracle_corr,
    "pareto": pareto,
    "plot": plot,
}
