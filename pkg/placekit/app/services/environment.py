"""Synthetic non-stationary environment standing in for reanalysis data."""

import logging
import math

import numpy as np
import torch

from placekit.app.errors import InvalidConfig
from placekit.app.models.environment import (
    DAYS_PER_YEAR,
    DateSplits,
    EnvironmentConfig,
    SyntheticEnvironment,
)
from placekit.app.models.gaussian import DenseGaussian
from placekit.app.models.task import ContextSet, GridSpec
from placekit.app.services.core_math import as_tensor, cholesky_psd, sample_mvn
from placekit.app.services.kernels import eq_matrix, gibbs_matrix
from placekit.app.telemetry import trace_method

logger = logging.getLogger(__name__)

# Nugget added to grid covariances; smooth kernels on a dense grid are
# numerically singular without it.
FIELD_NUGGET = 1e-6
BOUNDARY_SAMPLES = 1024
ELEVATION_STREAM = 0xE1E


def derive_seed(*entropy: int) -> int:
    """Deterministic 63-bit seed from a tuple of non-negative integers."""
    state = np.random.SeedSequence([int(e) for e in entropy]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def boundary_curve(config: EnvironmentConfig, x1: np.ndarray) -> np.ndarray:
    """x2 position of the wavy mask boundary at each x1."""
    return config.boundary_offset + config.boundary_amplitude * np.sin(
        2.0 * math.pi * config.boundary_frequency * x1
    )


def _boundary_distance(config: EnvironmentConfig, g1: np.ndarray, g2: np.ndarray) -> np.ndarray:
    curve_x1 = np.linspace(-1.0, 1.0, BOUNDARY_SAMPLES)
    curve_x2 = boundary_curve(config, curve_x1)
    d1 = g1.reshape(-1, 1) - curve_x1.reshape(1, -1)
    d2 = g2.reshape(-1, 1) - curve_x2.reshape(1, -1)
    return np.sqrt(d1**2 + d2**2).min(axis=1).reshape(g1.shape)


def _elevation(config: EnvironmentConfig, locations: np.ndarray, mask: np.ndarray) -> np.ndarray:
    x = as_tensor(locations)
    scales = as_tensor([config.elevation_lengthscale, config.elevation_lengthscale])
    cov = eq_matrix(x, x, torch.tensor(1.0, dtype=x.dtype), scales)
    cov = cov + FIELD_NUGGET * torch.eye(x.shape[0], dtype=x.dtype)
    draw = sample_mvn(
        DenseGaussian(mean=torch.zeros(x.shape[0], dtype=x.dtype), cov=cov),
        seed=derive_seed(config.seed, ELEVATION_STREAM),
        count=1,
    )[0].numpy()
    span = draw.max() - draw.min()
    normalised = (draw - draw.min()) / span if span > 0 else np.zeros_like(draw)
    return normalised.reshape(mask.shape) * mask


@trace_method("build_environment")
def build_environment(config: EnvironmentConfig, seed: int | None = None) -> SyntheticEnvironment:
    """Build the immutable ground-truth environment.

    Args:
        config: Environment parameters.
        seed: Overrides ``config.seed`` when given.

    Returns:
        A SyntheticEnvironment, bit-identical for identical inputs.

    Raises:
        InvalidConfig: If the configuration is invalid.
        NotPositiveDefinite: If the grid covariance cannot be factorised.
    """
    if seed is not None:
        config = EnvironmentConfig.model_validate({**config.model_dump(), "seed": seed})
    g = config.grid_size
    coords = np.linspace(-1.0, 1.0, g)
    g1, g2 = np.meshgrid(coords, coords, indexing="ij")

    distance = _boundary_distance(config, g1, g2)
    ramp = 1.0 - np.exp(-((distance / config.transition_width) ** 2))
    lengthscale_1 = config.short_lengthscale + (
        config.long_lengthscale - config.short_lengthscale
    ) * ramp
    lengthscale_2 = lengthscale_1 * config.anisotropy
    mask = (g2 > boundary_curve(config, g1)).astype(np.float64)

    locations = np.column_stack([g1.ravel(), g2.ravel()])
    x = as_tensor(locations)
    scales = as_tensor(np.column_stack([lengthscale_1.ravel(), lengthscale_2.ravel()]))
    with torch.no_grad():
        unit_cov = gibbs_matrix(x, x, torch.tensor(1.0, dtype=x.dtype), scales, scales)
        unit_cov = 0.5 * (unit_cov + unit_cov.T) + FIELD_NUGGET * torch.eye(g * g, dtype=x.dtype)
        scale_tril = cholesky_psd(unit_cov)
        elevation = _elevation(config, locations, mask)

    env = SyntheticEnvironment(
        config=config,
        coords=coords,
        lengthscale_1=lengthscale_1,
        lengthscale_2=lengthscale_2,
        mask=mask,
        elevation=elevation,
        boundary_distance=distance,
        unit_covariance=unit_cov.numpy(),
        unit_scale_tril=scale_tril.numpy(),
    )
    logger.info(
        "Environment built: G=%d seed=%d lengthscale range [%.3f, %.3f], %.0f%% masked-in",
        g,
        config.seed,
        float(lengthscale_1.min()),
        float(lengthscale_1.max()),
        100.0 * float(mask.mean()),
    )
    return env


def realize_field(env: SyntheticEnvironment, date_index: int, seed: int) -> np.ndarray:
    """One G x G ground-truth draw for a date.

    The field is a zero-mean Gibbs-GP sample with marginal variance
    ``base_variance * (1 + seasonal_amplitude * sin(2 pi tau / 365))``,
    shifted and scaled into target-variable units by ``offset``/``scale``.
    """
    if not 0 <= date_index < env.config.n_dates:
        raise InvalidConfig(f"date index {date_index} outside [0, {env.config.n_dates})")
    g = env.grid_size
    std = math.sqrt(env.seasonal_variance(date_index))
    cov = torch.from_numpy(env.unit_covariance) * std**2
    draw = sample_mvn(
        DenseGaussian(mean=torch.zeros(g * g, dtype=cov.dtype), cov=cov),
        seed=derive_seed(env.seed, date_index, seed),
        count=1,
        scale_tril=torch.from_numpy(env.unit_scale_tril) * std,
    )[0].numpy()
    return env.config.offset + env.config.scale * draw.reshape(g, g)


def auxiliary_context(env: SyntheticEnvironment, date_index: int) -> ContextSet:
    """Gridded auxiliary context: elevation, mask, cos/sin day of year, x1, x2."""
    g = env.grid_size
    grid = GridSpec(rows=g, cols=g)
    locations = grid.locations()
    phase = 2.0 * math.pi * (date_index % DAYS_PER_YEAR) / DAYS_PER_YEAR
    n = g * g
    values = np.column_stack(
        [
            env.elevation.ravel(),
            env.mask.ravel(),
            np.full(n, math.cos(phase)),
            np.full(n, math.sin(phase)),
            locations[:, 0],
            locations[:, 1],
        ]
    )
    return ContextSet(locations=locations, values=values, grid=grid)


def date_splits(env: SyntheticEnvironment) -> DateSplits:
    """Contiguous 60/20/20 train/validation/test split of the date range."""
    n = env.config.n_dates
    train_end = int(round(0.6 * n))
    val_end = int(round(0.8 * n))
    return DateSplits(
        train=list(range(0, train_end)),
        val=list(range(train_end, val_end)),
        test=list(range(val_end, n)),
    )


def evenly_spaced(dates: list[int], count: int) -> list[int]:
    """``count`` dates spread uniformly over ``dates`` (all of them if fewer)."""
    if count >= len(dates):
        return list(dates)
    picks = np.linspace(0, len(dates) - 1, count).round().astype(int)
    return [dates[i] for i in picks]


def search_grid(env: SyntheticEnvironment, stride: int) -> tuple[np.ndarray, np.ndarray]:
    """Masked-in cells of the stride-subsampled grid.

    Returns:
        Locations (S, 2) and their flat grid-cell indices, row-major.
    """
    g = env.grid_size
    rows, cols = np.meshgrid(np.arange(0, g, stride), np.arange(0, g, stride), indexing="ij")
    rows, cols = rows.ravel(), cols.ravel()
    keep = env.mask[rows, cols] > 0
    rows, cols = rows[keep], cols[keep]
    locations = np.column_stack([env.coords[rows], env.coords[cols]])
    return locations, rows * g + cols


def station_locations(env: SyntheticEnvironment, count: int, seed: int) -> np.ndarray:
    """Initial station network: ``count`` distinct masked-in grid cells."""
    candidates = np.flatnonzero(env.mask.ravel() > 0)
    if count > candidates.size:
        raise InvalidConfig(f"{count} stations requested but only {candidates.size} cells")
    rng = np.random.default_rng(derive_seed(env.seed, seed))
    chosen = np.sort(rng.choice(candidates, size=count, replace=False))
    return env.locations()[chosen]
