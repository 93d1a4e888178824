"""Acquisition fields, placement plans and their analysis results."""

from enum import StrEnum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from placekit.app.errors import ShapeMismatch


class AcquisitionKind(StrEnum):
    """Acquisition functions, model-based and oracle."""

    JOINT_MI = "JointMI"
    MARGINAL_MI = "MarginalMI"
    DELTA_VAR = "DeltaVar"
    CONTEXT_DIST = "ContextDist"
    RANDOM = "Random"
    ORACLE_JOINT_NLL = "OracleJointNLL"
    ORACLE_MARGINAL_NLL = "OracleMarginalNLL"
    ORACLE_RMSE = "OracleRMSE"

    @property
    def is_oracle(self) -> bool:
        """Whether the kind needs ground truth at the search sites."""
        return self.value.startswith("Oracle")

    @property
    def is_model_based(self) -> bool:
        """Whether the kind scores sites from the model's predictive covariance."""
        return self in MODEL_BASED_KINDS


MODEL_BASED_KINDS = frozenset(
    {AcquisitionKind.JOINT_MI, AcquisitionKind.MARGINAL_MI, AcquisitionKind.DELTA_VAR}
)


class AcquisitionField(BaseModel):
    """Per-site acquisition values over a search grid."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    search_locations: np.ndarray = Field(..., description="Shape (S, 2)")
    values: np.ndarray = Field(..., description="Shape (S,)")
    kind: AcquisitionKind
    dates_used: list[int] = Field(default_factory=list)

    @field_validator("search_locations", mode="before")
    @classmethod
    def _as_locations(cls, value: object) -> np.ndarray:
        return np.asarray(value, dtype=np.float64).reshape(-1, 2)

    @field_validator("values", mode="before")
    @classmethod
    def _as_vector(cls, value: object) -> np.ndarray:
        return np.asarray(value, dtype=np.float64).reshape(-1)

    @model_validator(mode="after")
    def _check(self) -> "AcquisitionField":
        if self.values.shape[0] != self.search_locations.shape[0]:
            raise ShapeMismatch(
                f"{self.search_locations.shape[0]} search sites but {self.values.shape[0]} values"
            )
        if not np.all(np.isfinite(self.values)):
            raise ShapeMismatch(f"{self.kind} field contains non-finite values")
        return self

    @property
    def size(self) -> int:
        """Number of search sites S."""
        return int(self.values.shape[0])


class PlacementStep(BaseModel):
    """One greedy iteration: the chosen site and the field it was chosen from."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    index: int = Field(..., ge=0, description="Index into the search locations")
    location: tuple[float, float]
    alpha: float
    field: AcquisitionField


class PlacementPlan(BaseModel):
    """Ordered greedy placements."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: AcquisitionKind
    model: str
    steps: list[PlacementStep] = Field(default_factory=list)

    @model_validator(mode="after")
    def _distinct(self) -> "PlacementPlan":
        chosen = [step.index for step in self.steps]
        if len(set(chosen)) != len(chosen):
            raise ShapeMismatch("placement plan repeats a search site")
        return self

    @property
    def locations(self) -> np.ndarray:
        """Placed locations in order, shape (K, 2)."""
        return np.asarray([step.location for step in self.steps], dtype=np.float64).reshape(-1, 2)

    @property
    def indices(self) -> list[int]:
        """Search-grid indices in placement order."""
        return [step.index for step in self.steps]


class CorrelationReport(BaseModel):
    """Agreement between an acquisition field and an oracle field."""

    kind: AcquisitionKind
    oracle: AcquisitionKind
    model: str
    pearson_r: float = Field(..., ge=-1.0 - 1e-12, le=1.0 + 1e-12)
    pearson_ci: tuple[float, float]
    kendall_kappa: float = Field(..., ge=-1.0, le=1.0)
    kendall_ci: tuple[float, float]
    n_resamples: int = Field(..., gt=0)
    n_sites: int = Field(..., ge=2)


class ParetoPoint(BaseModel):
    """A search site on the informativeness/cost trade-off."""

    index: int = Field(..., ge=0)
    informativeness: float
    cost: float
    rank: int = Field(..., ge=1)
