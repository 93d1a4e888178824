"""Task data model: context sets, target sets and normalisation."""

from typing import TypeAlias

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from placekit.app.errors import InvalidConfig, OutOfDomain, ShapeMismatch

Location2D: TypeAlias = tuple[float, float]

# Locations are normalised to [-1, 1]; allow for float round-off at the edges.
DOMAIN_TOLERANCE = 1e-9


def check_in_domain(locations: np.ndarray, what: str = "locations") -> None:
    """Raise OutOfDomain unless every row lies inside [-1, 1]^2."""
    if locations.size and float(np.abs(locations).max()) > 1.0 + DOMAIN_TOLERANCE:
        raise OutOfDomain(f"{what} fall outside the normalised [-1, 1] domain")


class GridSpec(BaseModel):
    """Regular grid over the domain, enumerated row-major.

    Row ``i`` sits at ``x1 = linspace(-1, 1, rows)[i]`` and column ``j`` at
    ``x2 = linspace(-1, 1, cols)[j]``.
    """

    model_config = ConfigDict(frozen=True)

    rows: int = Field(..., gt=0)
    cols: int = Field(..., gt=0)

    def locations(self) -> np.ndarray:
        """Grid node locations, shape (rows * cols, 2), row-major."""
        x1 = np.linspace(-1.0, 1.0, self.rows)
        x2 = np.linspace(-1.0, 1.0, self.cols)
        g1, g2 = np.meshgrid(x1, x2, indexing="ij")
        return np.column_stack([g1.ravel(), g2.ravel()])


class ContextSet(BaseModel):
    """One stream of (location, value) observations.

    Off-grid sets have ``grid=None``; gridded sets carry their GridSpec and
    enumerate its nodes row-major.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    locations: np.ndarray = Field(..., description="Shape (N_c, 2)")
    values: np.ndarray = Field(..., description="Shape (N_c, channels)")
    grid: GridSpec | None = None

    @field_validator("locations", "values", mode="before")
    @classmethod
    def _as_float_matrix(cls, value: object) -> np.ndarray:
        array = np.asarray(value, dtype=np.float64)
        if array.ndim == 1:
            array = array.reshape(-1, 1)
        return array

    @model_validator(mode="after")
    def _check_shapes(self) -> "ContextSet":
        if self.locations.shape[1:] != (2,) and self.locations.size:
            raise ShapeMismatch(f"locations must be (N, 2), got {self.locations.shape}")
        if self.locations.shape[0] != self.values.shape[0]:
            raise ShapeMismatch(
                f"{self.locations.shape[0]} locations but {self.values.shape[0]} value rows"
            )
        check_in_domain(self.locations, "context locations")
        if self.grid is not None:
            expected = self.grid.locations()
            if expected.shape != self.locations.shape or not np.allclose(
                expected, self.locations, atol=1e-12
            ):
                raise ShapeMismatch("gridded context set must enumerate its grid row-major")
        return self

    @classmethod
    def empty(cls, channels: int = 1) -> "ContextSet":
        """Context set with no observations."""
        return cls(locations=np.zeros((0, 2)), values=np.zeros((0, channels)))

    @property
    def size(self) -> int:
        """Number of observations N_c."""
        return int(self.locations.shape[0])

    @property
    def channels(self) -> int:
        """Number of value channels."""
        return int(self.values.shape[1])

    def appended(self, locations: np.ndarray, values: np.ndarray) -> "ContextSet":
        """Copy of this off-grid set with extra observations at the end."""
        locations = np.asarray(locations, dtype=np.float64).reshape(-1, 2)
        values = np.asarray(values, dtype=np.float64).reshape(len(locations), -1)
        return ContextSet(
            locations=np.vstack([self.locations.reshape(-1, 2), locations]),
            values=np.vstack([self.values.reshape(-1, values.shape[1]), values]),
        )


class Task(BaseModel):
    """One date's context sets plus target locations (and values when scored).

    ``contexts[0]`` is the observation set of the target variable and
    ``contexts[1]`` the gridded auxiliary set. ``truth`` optionally holds the
    full ground-truth field the task was sampled from, indexed like the
    environment grid; oracle experiments read revealed values from it.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    date_index: int = Field(..., ge=0)
    contexts: list[ContextSet] = Field(..., min_length=1)
    target_locations: np.ndarray
    target_values: np.ndarray | None = None
    truth: np.ndarray | None = None

    @field_validator("target_locations", mode="before")
    @classmethod
    def _as_locations(cls, value: object) -> np.ndarray:
        return np.asarray(value, dtype=np.float64).reshape(-1, 2)

    @field_validator("target_values", mode="before")
    @classmethod
    def _as_vector(cls, value: object) -> np.ndarray | None:
        if value is None:
            return None
        return np.asarray(value, dtype=np.float64).reshape(-1)

    @model_validator(mode="after")
    def _check_shapes(self) -> "Task":
        check_in_domain(self.target_locations, "target locations")
        if self.target_values is not None and len(self.target_values) != len(
            self.target_locations
        ):
            raise ShapeMismatch(
                f"{len(self.target_locations)} target locations but "
                f"{len(self.target_values)} target values"
            )
        return self

    @property
    def observations(self) -> ContextSet:
        """The observation context set (first context set)."""
        return self.contexts[0]

    @property
    def n_targets(self) -> int:
        """Number of target locations N_t."""
        return int(self.target_locations.shape[0])

    def with_targets(
        self, locations: np.ndarray, values: np.ndarray | None = None
    ) -> "Task":
        """Same contexts, different target set."""
        return self.model_copy(
            update={
                "target_locations": np.asarray(locations, dtype=np.float64).reshape(-1, 2),
                "target_values": None
                if values is None
                else np.asarray(values, dtype=np.float64).reshape(-1),
            }
        )

    def with_observations(self, locations: np.ndarray, values: np.ndarray) -> "Task":
        """Same task with extra observations appended to the observation set."""
        contexts = [self.observations.appended(locations, values), *self.contexts[1:]]
        return self.model_copy(update={"contexts": contexts})


class Normalizer(BaseModel):
    """Affine map to zero mean and unit standard deviation for one channel."""

    model_config = ConfigDict(frozen=True)

    mean: float = 0.0
    std: float = 1.0

    @field_validator("std")
    @classmethod
    def _positive_std(cls, value: float) -> float:
        if not value > 0:
            raise InvalidConfig(f"normalizer std must be positive, got {value}")
        return value

    @classmethod
    def fit(cls, values: np.ndarray) -> "Normalizer":
        """Normalizer reproducing sample mean 0 and (population) std 1 on ``values``."""
        values = np.asarray(values, dtype=np.float64).ravel()
        return cls(mean=float(values.mean()), std=float(values.std()))
