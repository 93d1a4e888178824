"""Task sampling and normalisation."""

import logging

import numpy as np
import pandas as pd

from placekit.app.errors import InvalidConfig
from placekit.app.models.environment import SyntheticEnvironment, TaskSamplingConfig
from placekit.app.models.task import ContextSet, Normalizer, Task
from placekit.app.prometheus import track_tasks_sampled
from placekit.app.services.environment import auxiliary_context, derive_seed, realize_field

logger = logging.getLogger(__name__)

NORMALIZER_STREAM = 0x4E4F


def normalize(values: np.ndarray, normalizer: Normalizer) -> np.ndarray:
    """Map raw values to zero mean and unit standard deviation."""
    return (np.asarray(values, dtype=np.float64) - normalizer.mean) / normalizer.std


def denormalize(values: np.ndarray, normalizer: Normalizer) -> np.ndarray:
    """Inverse of :func:`normalize`."""
    return np.asarray(values, dtype=np.float64) * normalizer.std + normalizer.mean


def fit_normalizer(
    env: SyntheticEnvironment, dates: list[int], seed: int = 0, max_dates: int = 64
) -> Normalizer:
    """Fit a normalizer on fields realised over (a spread of) training dates."""
    if not dates:
        raise InvalidConfig("cannot fit a normalizer on an empty date split")
    picks = np.linspace(0, len(dates) - 1, min(max_dates, len(dates))).round().astype(int)
    fields = [realize_field(env, dates[i], derive_seed(NORMALIZER_STREAM, seed)) for i in picks]
    normalizer = Normalizer.fit(np.stack(fields))
    logger.info(
        "Normalizer fitted on %d dates: mean=%.4f std=%.4f",
        len(fields),
        normalizer.mean,
        normalizer.std,
    )
    return normalizer


def make_task(
    env: SyntheticEnvironment,
    date_index: int,
    field: np.ndarray,
    context_cells: np.ndarray,
    target_cells: np.ndarray,
    *,
    context_noise: np.ndarray | None = None,
    normalizer: Normalizer | None = None,
) -> Task:
    """Assemble a Task from a realised field and flat grid-cell indices.

    Values are normalised when a normalizer is given; ``truth`` holds the
    whole (normalised) field.
    """
    truth = field if normalizer is None else normalize(field, normalizer)
    flat = truth.ravel()
    locations = env.locations()
    observed = flat[context_cells]
    if context_noise is not None:
        observed = observed + context_noise
    observations = ContextSet(locations=locations[context_cells], values=observed.reshape(-1, 1))
    return Task(
        date_index=date_index,
        contexts=[observations, auxiliary_context(env, date_index)],
        target_locations=locations[target_cells],
        target_values=flat[target_cells],
        truth=truth,
    )


def sample_task(
    env: SyntheticEnvironment,
    date_index: int,
    rng: np.random.Generator,
    cfg: TaskSamplingConfig,
    normalizer: Normalizer | None = None,
) -> Task:
    """Sample one training/evaluation task.

    N_c and N_t are drawn uniformly from their inclusive bounds; context and
    target cells are drawn uniformly without replacement, independently of
    each other. The outcome depends only on (env, date, rng state).

    Raises:
        InvalidConfig: If the bounds are inverted or exceed the grid.
    """
    cells = env.grid_size**2
    if cfg.nc_min > cfg.nc_max or cfg.nt_min > cfg.nt_max:
        raise InvalidConfig("task sampling bounds are inverted")
    if cfg.nc_max > cells or cfg.nt_max > cells:
        raise InvalidConfig(f"task sampling bounds exceed the {cells} grid cells")
    n_context = int(rng.integers(cfg.nc_min, cfg.nc_max + 1))
    n_targets = int(rng.integers(cfg.nt_min, cfg.nt_max + 1))
    return sample_sized_task(
        env,
        date_index,
        rng,
        n_context,
        n_targets,
        context_noise_std=cfg.context_noise_std,
        normalizer=normalizer,
    )


def sample_sized_task(
    env: SyntheticEnvironment,
    date_index: int,
    rng: np.random.Generator,
    n_context: int,
    n_targets: int,
    *,
    context_noise_std: float = 0.0,
    normalizer: Normalizer | None = None,
) -> Task:
    """Sample a task with fixed numbers of context and target points."""
    cells = env.grid_size**2
    if not (0 <= n_context <= cells and 0 < n_targets <= cells):
        raise InvalidConfig(f"cannot sample {n_context}/{n_targets} points from {cells} cells")
    field_seed = int(rng.integers(0, 2**62))
    context_cells = rng.choice(cells, size=n_context, replace=False)
    target_cells = rng.choice(cells, size=n_targets, replace=False)
    noise = rng.normal(0.0, context_noise_std, size=n_context) if context_noise_std > 0 else None
    field = realize_field(env, date_index, field_seed)
    track_tasks_sampled()
    return make_task(
        env,
        date_index,
        field,
        context_cells,
        target_cells,
        context_noise=noise,
        normalizer=normalizer,
    )


def task_rng(*entropy: int) -> np.random.Generator:
    """Independent generator for a (stream, worker, epoch, ...) tuple."""
    return np.random.default_rng(derive_seed(*entropy))


def truth_at(env: SyntheticEnvironment, task: Task, locations: np.ndarray) -> np.ndarray:
    """Ground-truth values of the task's field at the nearest grid cells."""
    if task.truth is None:
        raise InvalidConfig("task carries no ground-truth field")
    rows, cols = env.cell_indices(locations)
    return task.truth[rows, cols]


def task_frame(task: Task) -> pd.DataFrame:
    """Long-format table of a task: one row per context or target point.

    ``set_id`` is the context-set index, or ``"target"`` for target rows.
    """
    frames = []
    for set_id, context in enumerate(task.contexts):
        frame = pd.DataFrame(
            context.values, columns=[f"value_{c}" for c in range(context.channels)]
        )
        frame.insert(0, "x2", context.locations[:, 1] if context.size else [])
        frame.insert(0, "x1", context.locations[:, 0] if context.size else [])
        frame.insert(0, "set_id", str(set_id))
        frames.append(frame)
    targets = pd.DataFrame(
        {
            "set_id": "target",
            "x1": task.target_locations[:, 0],
            "x2": task.target_locations[:, 1],
            "value_0": task.target_values if task.target_values is not None else np.nan,
        }
    )
    frames.append(targets)
    return pd.concat(frames, ignore_index=True)
