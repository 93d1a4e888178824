"""Learned-covariance maps, predictive samples and length-scale fields."""

import logging

import numpy as np

from placekit.app.errors import InvalidConfig
from placekit.app.models.environment import SyntheticEnvironment
from placekit.app.models.kernel_params import GibbsParams
from placekit.app.models.task import ContextSet, Task
from placekit.app.services.core_math import sample_mvn
from placekit.app.services.environment import auxiliary_context
from placekit.app.services.gp import GPModel
from placekit.app.services.kernels import lengthscale_field
from placekit.app.services.neural_process import NPModel
from placekit.app.services.tasks import denormalize

logger = logging.getLogger(__name__)


def empty_task(env: SyntheticEnvironment, date_index: int) -> Task:
    """Task with no observations, only the date's auxiliary grid, targeting every cell."""
    return Task(
        date_index=date_index,
        contexts=[ContextSet.empty(), auxiliary_context(env, date_index)],
        target_locations=env.locations(),
    )


def prior_covariance_map(
    model: GPModel | NPModel,
    env: SyntheticEnvironment,
    date_index: int,
    anchor: tuple[float, float],
) -> np.ndarray:
    """Covariance between ``anchor`` and every grid cell with no observations, (G, G)."""
    locations = env.locations()
    if isinstance(model, NPModel):
        cov = model.prior_covariance(anchor, locations, empty_task(env, date_index))
    else:
        cov = model.prior_covariance(anchor, locations)
    return np.asarray(cov).reshape(env.grid_size, env.grid_size)


def prior_correlation_map(
    model: GPModel | NPModel,
    env: SyntheticEnvironment,
    date_index: int,
    anchor: tuple[float, float],
) -> np.ndarray:
    """Correlation counterpart of :func:`prior_covariance_map`."""
    task = empty_task(env, date_index)
    points = np.vstack([np.asarray(anchor, dtype=np.float64).reshape(1, 2), env.locations()])
    variances = model.predict(task.with_targets(points), latent=True).marginal_variances()
    variances = variances.detach().numpy()
    cov = prior_covariance_map(model, env, date_index, anchor).ravel()
    corr = cov / np.sqrt(variances[0] * variances[1:])
    return corr.reshape(env.grid_size, env.grid_size)


def correlation_difference(
    model: GPModel | NPModel,
    env: SyntheticEnvironment,
    dates: tuple[int, int],
    anchor: tuple[float, float],
) -> np.ndarray:
    """Correlation map on the first date minus that on the second."""
    first = prior_correlation_map(model, env, dates[0], anchor)
    second = prior_correlation_map(model, env, dates[1], anchor)
    logger.info(
        "%s correlation change between dates %d and %d: max |diff| %.4f",
        model.name,
        dates[0],
        dates[1],
        float(np.max(np.abs(first - second))),
    )
    return first - second


def draw_samples(
    model: GPModel | NPModel,
    env: SyntheticEnvironment,
    task: Task,
    count: int,
    seed: int,
) -> np.ndarray:
    """Samples of the latent field on the whole grid given the task's contexts.

    Returns:
        Array (count, G, G) in target-variable units.
    """
    if count < 1:
        raise InvalidConfig(f"sample count must be positive, got {count}")
    pred = model.predict(task.with_targets(env.locations()), latent=True)
    samples = sample_mvn(pred, seed, count).numpy()
    g = env.grid_size
    return denormalize(samples, model.normalizer).reshape(count, g, g)


def lengthscale_maps(
    params: GibbsParams, env: SyntheticEnvironment
) -> tuple[np.ndarray, np.ndarray]:
    """Fitted Gibbs length-scale fields on the environment grid, each (G, G)."""
    l1, l2 = lengthscale_field(params, env.locations())
    g = env.grid_size
    return l1.detach().numpy().reshape(g, g), l2.detach().numpy().reshape(g, g)
