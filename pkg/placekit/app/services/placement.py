"""Greedy sensor placement, oracle fields and placement evaluation."""

import logging

import numpy as np

from placekit.app.errors import InvalidConfig
from placekit.app.models.environment import SyntheticEnvironment
from placekit.app.models.metric_report import MetricReport
from placekit.app.models.placement import (
    AcquisitionField,
    AcquisitionKind,
    PlacementPlan,
    PlacementStep,
)
from placekit.app.models.task import Normalizer, Task
from placekit.app.prometheus import track_placement
from placekit.app.services.acquisition import acquisition_field, impute_mean
from placekit.app.services.environment import realize_field
from placekit.app.services.metrics import evaluate_tasks, mean_report
from placekit.app.services.prediction import Predictor
from placekit.app.services.tasks import make_task, truth_at
from placekit.app.telemetry import trace_method

logger = logging.getLogger(__name__)


def flat_cells(env: SyntheticEnvironment, locations: np.ndarray) -> np.ndarray:
    """Row-major grid-cell indices of the cells nearest to ``locations``."""
    rows, cols = env.cell_indices(np.asarray(locations, dtype=np.float64).reshape(-1, 2))
    return np.asarray(rows * env.grid_size + cols, dtype=int)


def placement_tasks(
    env: SyntheticEnvironment,
    dates: list[int],
    stations: np.ndarray,
    target_locations: np.ndarray,
    normalizer: Normalizer,
    seed: int,
) -> list[Task]:
    """One task per date with the station network as observation context.

    Targets carry their true values so that the same tasks serve placement,
    oracle fields and evaluation.
    """
    context_cells = flat_cells(env, stations) if len(stations) else np.zeros(0, dtype=int)
    target_cells = flat_cells(env, target_locations)
    return [
        make_task(
            env,
            date,
            realize_field(env, date, seed),
            context_cells,
            target_cells,
            normalizer=normalizer,
        )
        for date in dates
    ]


def _with_imputed(model: Predictor | None, task: Task, location: np.ndarray) -> Task:
    value = impute_mean(model, task, location) if model is not None else np.zeros(1)
    return task.with_observations(location, value)


@trace_method("greedy_place")
def greedy_place(
    model: Predictor | None,
    kind: AcquisitionKind,
    tasks: list[Task],
    search_locations: np.ndarray,
    target_locations: np.ndarray,
    k: int,
    *,
    seed: int = 0,
    threads: int = 1,
) -> PlacementPlan:
    """Place ``k`` sensors one at a time.

    Each iteration averages the acquisition field over the dates, takes the
    argmax over sites not yet chosen (lowest index on ties) and appends the
    winner to every date's observations. The unobserved value is imputed
    with the model mean, or zero when there is no model.

    Raises:
        InvalidConfig: If ``k`` exceeds the number of search sites or the
            kind is an oracle.
    """
    search = np.asarray(search_locations, dtype=np.float64).reshape(-1, 2)
    if not 0 <= k <= search.shape[0]:
        raise InvalidConfig(f"cannot place {k} sensors on {search.shape[0]} search sites")
    if kind.is_oracle:
        raise InvalidConfig(f"{kind} cannot drive placement")

    current = list(tasks)
    chosen: list[int] = []
    steps: list[PlacementStep] = []
    for step in range(k):
        field = acquisition_field(
            model, kind, current, search, target_locations, seed=seed, threads=threads
        )
        masked = field.values.copy()
        masked[chosen] = -np.inf
        best = int(np.argmax(masked))
        location = search[best : best + 1]
        current = [_with_imputed(model, task, location) for task in current]
        chosen.append(best)
        steps.append(
            PlacementStep(
                index=best,
                location=(float(location[0, 0]), float(location[0, 1])),
                alpha=float(field.values[best]),
                field=field,
            )
        )
        track_placement(str(kind))
        logger.info(
            "%s placement %d/%d: site %d at (%.4f, %.4f), alpha=%.5g",
            kind,
            step + 1,
            k,
            best,
            location[0, 0],
            location[0, 1],
            field.values[best],
        )
    name = model.name if model is not None else "none"
    return PlacementPlan(kind=kind, model=name, steps=steps)


def oracle_acquisition(
    model: Predictor,
    kind: AcquisitionKind,
    env: SyntheticEnvironment,
    tasks: list[Task],
    search_locations: np.ndarray,
    target_locations: np.ndarray,
    *,
    threads: int = 1,
) -> AcquisitionField:
    """Date-averaged oracle field: metric drop from revealing the truth at each site."""
    if not kind.is_oracle:
        raise InvalidConfig(f"{kind} is not an oracle kind")
    return acquisition_field(
        model, kind, tasks, search_locations, target_locations, env=env, threads=threads
    )


def evaluate_plan(
    model: Predictor,
    locations: np.ndarray,
    env: SyntheticEnvironment,
    tasks: list[Task],
) -> list[MetricReport]:
    """Metrics after revealing the true values at the first k placements, k = 0..K."""
    locations = np.asarray(locations, dtype=np.float64).reshape(-1, 2)
    reports = []
    for k in range(locations.shape[0] + 1):
        if k == 0:
            revealed = list(tasks)
        else:
            revealed = [
                task.with_observations(locations[:k], truth_at(env, task, locations[:k]))
                for task in tasks
            ]
        reports.append(evaluate_tasks(model, revealed))
    return reports


def random_plan_reports(
    model: Predictor,
    env: SyntheticEnvironment,
    tasks: list[Task],
    search_locations: np.ndarray,
    target_locations: np.ndarray,
    k: int,
    seeds: list[int],
) -> list[MetricReport]:
    """Per-k metrics averaged over Random plans, with standard errors across seeds."""
    if not seeds:
        raise InvalidConfig("random plan evaluation needs at least one seed")
    series = [
        evaluate_plan(
            model,
            greedy_place(
                None,
                AcquisitionKind.RANDOM,
                tasks,
                search_locations,
                target_locations,
                k,
                seed=seed,
            ).locations,
            env,
            tasks,
        )
        for seed in seeds
    ]
    return [mean_report([run[step] for run in series]) for step in range(k + 1)]
