"""Prometheus metrics for experiment runs.

A batch process has no scrape endpoint, so each command writes the registry
to ``metrics.prom`` in its run directory (node-exporter textfile format).
"""

import logging
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

from prometheus_client import REGISTRY, CollectorRegistry, Counter, Gauge, Histogram
from prometheus_client import write_to_textfile

from placekit.app.config import settings

logger = logging.getLogger(__name__)

TASKS_SAMPLED = Counter(
    "placekit_tasks_sampled_total",
    "Total count of tasks sampled from the synthetic environment",
)
TRAINING_STEPS = Counter(
    "placekit_training_steps_total",
    "Total count of optimiser steps",
    ["model"],
)
ACQUISITION_EVALUATIONS = Counter(
    "placekit_acquisition_evaluations_total",
    "Total count of per-date acquisition field evaluations",
    ["kind"],
)
PLACEMENTS = Counter(
    "placekit_placements_total",
    "Total count of greedy sensor placements",
    ["kind"],
)
COMMAND_DURATION = Histogram(
    "placekit_command_duration_seconds",
    "Wall time of a placekit command in seconds",
    ["command"],
    buckets=(1, 5, 15, 60, 300, 900, 1800, 3600, float("inf")),
)
BEST_VALIDATION_NLL = Gauge(
    "placekit_best_validation_nll",
    "Best validation NLL per target reached during fitting",
    ["model"],
)


def track_tasks_sampled(count: int = 1) -> None:
    """Increment the sampled-task counter."""
    TASKS_SAMPLED.inc(count)


def track_training_step(model: str) -> None:
    """Increment the optimiser-step counter for a model."""
    TRAINING_STEPS.labels(model=model).inc()


def track_acquisition(kind: str, count: int = 1) -> None:
    """Increment the acquisition-evaluation counter for an acquisition kind."""
    ACQUISITION_EVALUATIONS.labels(kind=kind).inc(count)


def track_placement(kind: str) -> None:
    """Increment the placement counter for an acquisition kind."""
    PLACEMENTS.labels(kind=kind).inc()


def track_best_validation(model: str, value: float) -> None:
    """Record the best validation NLL reached by a model."""
    BEST_VALIDATION_NLL.labels(model=model).set(value)


@contextmanager
def track_command(command: str) -> Iterator[None]:
    """Time a command into the duration histogram."""
    start = time.perf_counter()
    try:
        yield
    finally:
        COMMAND_DURATION.labels(command=command).observe(time.perf_counter() - start)


def export_metrics(path: Path, registry: CollectorRegistry = REGISTRY) -> Path | None:
    """Write the registry in text format to ``path``.

    Args:
        path: Destination file, usually ``<run dir>/metrics.prom``.
        registry: Registry to export.

    Returns:
        The written path, or None when Prometheus export is disabled.
    """
    if not settings.PROMETHEUS_ENABLED:
        logger.debug("Prometheus export disabled; not writing %s", path)
        return None
    path.parent.mkdir(parents=True, exist_ok=True)
    write_to_textfile(str(path), registry)
    logger.debug("Prometheus metrics written to %s", path)
    return path
