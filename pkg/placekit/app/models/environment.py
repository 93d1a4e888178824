"""Synthetic ground-truth environment and task-sampling configuration."""

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from placekit.app.errors import InvalidConfig

DAYS_PER_YEAR = 365


class EnvironmentConfig(BaseModel):
    """Parameters of the synthetic non-stationary environment.

    The length-scale field drops from ``long_lengthscale`` far from the wavy
    mask boundary to ``short_lengthscale`` on it, the analog of the sharp
    decorrelation across a coastline.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    grid_size: int = 32
    seed: int = Field(..., ge=0)
    years: int = Field(default=2, ge=1)
    base_variance: float = 1.0
    seasonal_amplitude: float = 0.5
    long_lengthscale: float = Field(default=0.4, gt=0)
    short_lengthscale: float = Field(default=0.08, gt=0)
    anisotropy: float = Field(default=1.25, gt=0)
    transition_width: float = Field(default=0.15, gt=0)
    boundary_offset: float = 0.0
    boundary_amplitude: float = 0.2
    boundary_frequency: float = 1.0
    elevation_lengthscale: float = Field(default=0.3, gt=0)
    offset: float = 0.0
    scale: float = Field(default=1.0, gt=0)

    @field_validator("grid_size")
    @classmethod
    def _check_grid_size(cls, value: int) -> int:
        if value < 8:
            raise InvalidConfig(f"environment.grid_size must be >= 8, got {value}")
        return value

    @field_validator("base_variance")
    @classmethod
    def _check_variance(cls, value: float) -> float:
        if not value > 0:
            raise InvalidConfig(f"environment.base_variance must be positive, got {value}")
        return value

    @field_validator("seasonal_amplitude")
    @classmethod
    def _check_amplitude(cls, value: float) -> float:
        if not abs(value) < 1:
            raise InvalidConfig(
                f"environment.seasonal_amplitude must lie in (-1, 1), got {value}"
            )
        return value

    @property
    def n_dates(self) -> int:
        """Total number of synthetic dates."""
        return self.years * DAYS_PER_YEAR


class SyntheticEnvironment(BaseModel):
    """Immutable ground-truth environment on a G x G grid over [-1, 1]^2.

    Grid arrays are indexed ``[i, j]`` with ``x1 = coords[i]`` and
    ``x2 = coords[j]``.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    config: EnvironmentConfig
    coords: np.ndarray
    lengthscale_1: np.ndarray
    lengthscale_2: np.ndarray
    mask: np.ndarray
    elevation: np.ndarray
    boundary_distance: np.ndarray
    unit_covariance: np.ndarray = Field(
        ..., description="Unit-variance Gibbs covariance between all grid cells"
    )
    unit_scale_tril: np.ndarray = Field(..., description="Cholesky factor of unit_covariance")

    @model_validator(mode="after")
    def _check_fields(self) -> "SyntheticEnvironment":
        g = self.config.grid_size
        for name in ("lengthscale_1", "lengthscale_2", "mask", "elevation"):
            field = getattr(self, name)
            if field.shape != (g, g) or not np.all(np.isfinite(field)):
                raise InvalidConfig(f"environment field {name} must be a finite {g}x{g} grid")
        if not (np.all(self.lengthscale_1 > 0) and np.all(self.lengthscale_2 > 0)):
            raise InvalidConfig("length-scale fields must be strictly positive")
        if not np.all(np.isin(self.mask, (0, 1))):
            raise InvalidConfig("mask must be binary")
        return self

    @property
    def grid_size(self) -> int:
        """Grid resolution G."""
        return self.config.grid_size

    @property
    def seed(self) -> int:
        """Seed the environment was built with."""
        return self.config.seed

    def locations(self) -> np.ndarray:
        """All grid cell locations, shape (G * G, 2), row-major."""
        g1, g2 = np.meshgrid(self.coords, self.coords, indexing="ij")
        return np.column_stack([g1.ravel(), g2.ravel()])

    def seasonal_variance(self, date_index: int) -> float:
        """Marginal variance of the field on a given date."""
        phase = 2.0 * math.pi * date_index / DAYS_PER_YEAR
        return self.config.base_variance * (
            1.0 + self.config.seasonal_amplitude * math.sin(phase)
        )

    def cell_indices(self, locations: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest grid cell (row, col) for each location."""
        locations = np.asarray(locations, dtype=np.float64).reshape(-1, 2)
        scale = (self.grid_size - 1) / 2.0
        idx = np.rint((locations + 1.0) * scale).astype(int)
        idx = np.clip(idx, 0, self.grid_size - 1)
        return idx[:, 0], idx[:, 1]

    def region_masks(self) -> tuple[np.ndarray, np.ndarray]:
        """Boolean (short-scale, long-scale) regions of the length-scale field."""
        width = self.config.transition_width
        return self.boundary_distance < 0.5 * width, self.boundary_distance > 2.5 * width


class TaskSamplingConfig(BaseModel):
    """Bounds for the number of context and target points per task."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    nc_min: int = Field(default=3, ge=0)
    nc_max: int = Field(default=50, ge=0)
    nt_min: int = Field(default=200, ge=1)
    nt_max: int = Field(default=400, ge=1)
    context_noise_std: float = Field(default=0.0, ge=0)


class DateSplits(BaseModel):
    """Train/validation/test date indices, split 60/20/20 by date."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    train: list[int]
    val: list[int]
    test: list[int]
