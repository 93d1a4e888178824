"""Experiment configuration document."""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from placekit.app.errors import InvalidConfig
from placekit.app.models.environment import EnvironmentConfig, TaskSamplingConfig
from placekit.app.models.kernel_params import KernelVariant
from placekit.app.models.neural_process import NPArchitecture, TrainConfig
from placekit.app.models.placement import AcquisitionKind

ModelName = Literal["eq", "rq", "gibbs", "np"]


class GPSection(BaseModel):
    """GP baseline fitting."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    variants: list[KernelVariant] = Field(default_factory=lambda: ["eq", "rq", "gibbs"])
    learning_rate: float = Field(default=0.05, gt=0)
    batch_size: int = Field(default=10, gt=0)
    max_epochs: int = Field(default=100, gt=0)
    patience: int = Field(default=5, gt=0)
    n_train_tasks: int = Field(default=50, gt=0)
    n_val_tasks: int = Field(default=10, gt=0)
    n_context: int = Field(default=100, gt=0, description="Observations per fitting task")
    basis_per_side: int = Field(default=10, ge=2)
    seed: int = 0


class NPSection(BaseModel):
    """Neural-process architecture and training."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    architecture: NPArchitecture = Field(default_factory=NPArchitecture)
    training: TrainConfig = Field(default_factory=TrainConfig)


class SweepSection(BaseModel):
    """Metric sweep over the number of observation context points."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    models: list[ModelName] = Field(default_factory=lambda: ["eq", "gibbs", "np"])
    n_context: list[int] = Field(default_factory=lambda: [0, 5, 10, 20, 50])
    n_targets: int = Field(default=300, gt=0)
    tasks_per_setting: int = Field(default=20, gt=0)
    pit_bins: int = Field(default=20, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_ladder(self) -> "SweepSection":
        if any(n < 0 for n in self.n_context):
            raise InvalidConfig("sweep.n_context entries must be non-negative")
        return self


class PlacementSection(BaseModel):
    """Greedy placement, oracle correlation and Pareto ranking."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    models: list[ModelName] = Field(default_factory=lambda: ["gibbs", "np"])
    kinds: list[AcquisitionKind] = Field(
        default_factory=lambda: [
            AcquisitionKind.DELTA_VAR,
            AcquisitionKind.JOINT_MI,
            AcquisitionKind.MARGINAL_MI,
            AcquisitionKind.CONTEXT_DIST,
            AcquisitionKind.RANDOM,
        ]
    )
    oracle_kinds: list[AcquisitionKind] = Field(
        default_factory=lambda: [
            AcquisitionKind.ORACLE_RMSE,
            AcquisitionKind.ORACLE_MARGINAL_NLL,
            AcquisitionKind.ORACLE_JOINT_NLL,
        ]
    )
    k: int = Field(default=5, ge=0, description="Number of sensors K to place")
    n_dates: int = Field(default=1, gt=0, description="Dates J averaged per acquisition")
    n_test_dates: int = Field(default=8, gt=0)
    oracle_dates: int = Field(default=4, gt=0)
    search_stride: int = Field(default=2, gt=0)
    n_stations: int = Field(default=10, ge=0)
    station_seed: int = 0
    random_seeds: int = Field(default=5, gt=0)
    bootstrap_resamples: int = Field(default=5000, gt=0)
    bootstrap_seed: int = 0
    informativeness: AcquisitionKind = AcquisitionKind.DELTA_VAR
    cost: AcquisitionKind = AcquisitionKind.CONTEXT_DIST
    pareto_model: ModelName = "np"

    @model_validator(mode="after")
    def _check_kinds(self) -> "PlacementSection":
        if any(kind.is_oracle for kind in self.kinds):
            raise InvalidConfig("placement.kinds must not contain oracle kinds")
        if not all(kind.is_oracle for kind in self.oracle_kinds):
            raise InvalidConfig("placement.oracle_kinds must only contain oracle kinds")
        return self


class PlotSection(BaseModel):
    """Diagnostic maps emitted by the plot command."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    models: list[ModelName] = Field(default_factory=lambda: ["gibbs", "np"])
    dates: tuple[int, int] = (0, 182)
    anchor: tuple[float, float] = (0.0, 0.0)
    n_samples: int = Field(default=3, ge=0)
    sample_seed: int = 0


class OutputSection(BaseModel):
    """Where run artifacts go; empty means the ``PLACEKIT_OUT`` setting."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    directory: str = ""


class ExperimentConfig(BaseModel):
    """Top-level experiment configuration."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    environment: EnvironmentConfig
    tasks: TaskSamplingConfig = Field(default_factory=TaskSamplingConfig)
    gp: GPSection = Field(default_factory=GPSection)
    np: NPSection = Field(default_factory=NPSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    placement: PlacementSection = Field(default_factory=PlacementSection)
    plot: PlotSection = Field(default_factory=PlotSection)
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _check_bounds(self) -> "ExperimentConfig":
        cells = self.environment.grid_size**2
        if self.tasks.nc_min > self.tasks.nc_max:
            raise InvalidConfig("tasks.nc_min must not exceed tasks.nc_max")
        if self.tasks.nt_min > self.tasks.nt_max:
            raise InvalidConfig("tasks.nt_min must not exceed tasks.nt_max")
        if self.tasks.nc_max > cells or self.tasks.nt_max > cells:
            raise InvalidConfig(f"tasks bounds exceed the {cells} grid cells")
        if self.gp.n_context > cells:
            raise InvalidConfig(f"gp.n_context exceeds the {cells} grid cells")
        if self.sweep.n_targets > cells or max(self.sweep.n_context, default=0) > cells:
            raise InvalidConfig(f"sweep sizes exceed the {cells} grid cells")
        return self

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with ``environment.seed`` replaced."""
        return self.model_copy(
            update={"environment": self.environment.model_copy(update={"seed": seed})}
        )
