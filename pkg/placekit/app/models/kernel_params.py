"""Hyperparameters of the GP baseline kernels."""

import math
from typing import Annotated, Literal, TypeAlias

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from placekit.app.errors import InvalidConfig

NOISE_FLOOR = 1e-6


class _KernelParamsBase(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    variance: float = Field(default=1.0, gt=0)
    noise_var: float = Field(default=0.01, ge=NOISE_FLOOR)


class EQParams(_KernelParamsBase):
    """Anisotropic exponentiated-quadratic kernel."""

    variant: Literal["eq"] = "eq"
    lengthscale_1: float = Field(default=0.3, gt=0)
    lengthscale_2: float = Field(default=0.3, gt=0)


class RQParams(_KernelParamsBase):
    """Anisotropic rational-quadratic kernel with shape parameter ``alpha``."""

    variant: Literal["rq"] = "rq"
    lengthscale_1: float = Field(default=0.3, gt=0)
    lengthscale_2: float = Field(default=0.3, gt=0)
    alpha: float = Field(default=1.0, gt=0)


class GibbsParams(_KernelParamsBase):
    """Gibbs kernel whose length-scale fields are sums of Gaussian bumps.

    ``centers`` is a regular grid of basis locations (shape (M, 2)) and
    ``basis_scale`` equals its spacing. ``theta_1``/``theta_2`` hold the M
    positive weights of the two length-scale fields.
    """

    variant: Literal["gibbs"] = "gibbs"
    theta_1: np.ndarray
    theta_2: np.ndarray
    centers: np.ndarray
    basis_scale: float = Field(..., gt=0)

    @field_validator("theta_1", "theta_2", "centers", mode="before")
    @classmethod
    def _as_float(cls, value: object) -> np.ndarray:
        return np.asarray(value, dtype=np.float64)

    @model_validator(mode="after")
    def _check_basis(self) -> "GibbsParams":
        m = self.centers.shape[0]
        if self.centers.shape != (m, 2) or m == 0:
            raise InvalidConfig(f"gibbs centers must be (M, 2), got {self.centers.shape}")
        for name in ("theta_1", "theta_2"):
            theta = getattr(self, name)
            if theta.shape != (m,):
                raise InvalidConfig(f"gibbs {name} must have {m} weights, got {theta.shape}")
            if not np.all(theta > 0):
                raise InvalidConfig(f"gibbs {name} weights must be strictly positive")
        per_side = math.isqrt(m)
        if per_side * per_side != m or per_side < 2:
            raise InvalidConfig(f"gibbs basis of {m} centers is not a square grid")
        expected, spacing = basis_grid(per_side)
        if not np.allclose(self.centers, expected, rtol=0.0, atol=1e-12):
            raise InvalidConfig(f"gibbs centers are not the regular {per_side}x{per_side} grid")
        if not math.isclose(self.basis_scale, spacing, rel_tol=1e-12):
            raise InvalidConfig(
                f"gibbs basis_scale {self.basis_scale} differs from the grid spacing {spacing}"
            )
        return self

    @property
    def n_basis(self) -> int:
        """Number of basis functions M."""
        return int(self.centers.shape[0])


KernelParams: TypeAlias = Annotated[
    EQParams | RQParams | GibbsParams, Field(discriminator="variant")
]

KernelVariant: TypeAlias = Literal["eq", "rq", "gibbs"]


def basis_grid(per_side: int) -> tuple[np.ndarray, float]:
    """Regular ``per_side x per_side`` basis centers over [-1, 1]^2 and their spacing."""
    if per_side < 2:
        raise InvalidConfig(f"gibbs basis grid needs at least 2 centers per side, got {per_side}")
    axis = np.linspace(-1.0, 1.0, per_side)
    c1, c2 = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([c1.ravel(), c2.ravel()]), float(axis[1] - axis[0])
