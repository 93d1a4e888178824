"""Configuration and intermediate types of the convolutional neural process."""

import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator

from placekit.app.errors import InvalidConfig

AUX_CHANNELS = 6


class NPArchitecture(BaseModel):
    """Shape of the SetConv encoder, U-Net backbone and output heads."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    ppu: int = Field(default=16, gt=0, description="Internal grid points per unit")
    channels: int = Field(default=16, gt=0)
    levels: int = Field(default=2, ge=1, description="Down-sampling (= up-sampling) stages")
    kernel_size: int = Field(default=3, ge=1)
    rank: int = Field(default=16, gt=0, description="Covariance basis functions R")
    head_hidden: int = Field(default=32, gt=0)
    diag_floor: float = Field(default=1e-6, gt=0)
    init_seed: int = 0

    @model_validator(mode="after")
    def _check_schedule(self) -> "NPArchitecture":
        if self.kernel_size % 2 == 0:
            raise InvalidConfig("np.architecture.kernel_size must be odd")
        if self.grid_points < 4:
            raise InvalidConfig(
                f"np.architecture.ppu={self.ppu} yields a {self.grid_points}x"
                f"{self.grid_points} internal grid; need at least 4x4"
            )
        if self.coarsest_points < 1:
            raise InvalidConfig(
                f"np.architecture.levels={self.levels} pools the {self.grid_points}x"
                f"{self.grid_points} internal grid away; lower levels or raise ppu"
            )
        return self

    @property
    def grid_points(self) -> int:
        """Internal grid nodes per side over [-1, 1]."""
        return 2 * self.ppu + 1

    @property
    def coarsest_points(self) -> int:
        """Grid nodes per side at the bottom of the U-Net, after every 2x pooling."""
        return self.grid_points // 2**self.levels

    @property
    def setconv_scale(self) -> float:
        """Fixed Gaussian basis length scale of the SetConv encoder."""
        return 2.0 / self.ppu

    @property
    def input_channels(self) -> int:
        """Encoder output width: observation density/data plus auxiliary density/data."""
        return 2 + 1 + AUX_CHANNELS


class TrainConfig(BaseModel):
    """Neural-process training schedule."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(default=1e-3, ge=0)
    batch_size: int = Field(default=2, gt=0)
    max_epochs: int = Field(default=30, gt=0)
    tasks_per_epoch: int = Field(default=64, gt=0)
    n_val_tasks: int = Field(default=32, gt=0)
    patience: int = Field(default=10, gt=0)
    seed: int = 0


class EpochRecord(BaseModel):
    """One row of the training history."""

    epoch: int
    train_nll: float
    val_nll: float
    checkpointed: bool


class GridEncoding(BaseModel):
    """SetConv output on the internal grid: a (C, H, W) tensor."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    channels: torch.Tensor
    ppu: int = Field(..., gt=0)

    @model_validator(mode="after")
    def _check_shape(self) -> "GridEncoding":
        if self.channels.ndim != 3:
            raise InvalidConfig(
                f"grid encoding must be (C, H, W), got {tuple(self.channels.shape)}"
            )
        return self
