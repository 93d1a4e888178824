"""Multivariate Gaussian predictive distributions."""

from typing import TypeAlias

import torch
from pydantic import BaseModel, ConfigDict, Field, model_validator

from placekit.app.errors import ShapeMismatch


class DenseGaussian(BaseModel):
    """Gaussian with an explicit N x N covariance, as produced by the GP baselines."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: torch.Tensor = Field(..., description="Mean vector, shape (N,)")
    cov: torch.Tensor = Field(..., description="Covariance matrix, shape (N, N)")

    @model_validator(mode="after")
    def _check_shapes(self) -> "DenseGaussian":
        n = self.mean.shape[0]
        if self.mean.ndim != 1 or self.cov.shape != (n, n):
            raise ShapeMismatch(
                f"mean {tuple(self.mean.shape)} and cov {tuple(self.cov.shape)} disagree"
            )
        if n:
            cov = self.cov.detach()
            scale = float(cov.abs().max())
            if float((cov - cov.T).abs().max()) > 1e-10 * max(scale, 1e-300):
                raise ShapeMismatch("covariance is not symmetric")
        return self

    @property
    def size(self) -> int:
        """Number of jointly distributed outputs."""
        return int(self.mean.shape[0])

    def marginal_variances(self) -> torch.Tensor:
        """Diagonal of the covariance."""
        return torch.diagonal(self.cov)

    def covariance(self) -> torch.Tensor:
        """Dense covariance matrix."""
        return self.cov


class LowRankDiagGaussian(BaseModel):
    """Gaussian with covariance ``factor @ factor.T + diag(diag)``.

    This is the output structure of the neural process: ``factor`` row i is the
    covariance basis vector g(r_i) and ``diag`` the learned positive noise term.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: torch.Tensor = Field(..., description="Mean vector, shape (N,)")
    factor: torch.Tensor = Field(..., description="Low-rank factor, shape (N, R)")
    diag: torch.Tensor = Field(..., description="Strictly positive diagonal, shape (N,)")

    @model_validator(mode="after")
    def _check_shapes(self) -> "LowRankDiagGaussian":
        n = self.mean.shape[0]
        if self.mean.ndim != 1 or self.factor.ndim != 2 or self.factor.shape[0] != n:
            raise ShapeMismatch(
                f"mean {tuple(self.mean.shape)} and factor {tuple(self.factor.shape)} disagree"
            )
        if self.diag.shape != (n,):
            raise ShapeMismatch(f"diag {tuple(self.diag.shape)} does not match N={n}")
        if n and not bool(torch.all(self.diag.detach() > 0)):
            raise ShapeMismatch("diag entries must be strictly positive")
        return self

    @property
    def size(self) -> int:
        """Number of jointly distributed outputs."""
        return int(self.mean.shape[0])

    @property
    def rank(self) -> int:
        """Number of covariance basis functions R."""
        return int(self.factor.shape[1])

    def marginal_variances(self) -> torch.Tensor:
        """Diagonal of the implied covariance, ``|g(r_i)|^2 + d_i``."""
        return (self.factor**2).sum(dim=1) + self.diag

    def covariance(self) -> torch.Tensor:
        """Materialised dense covariance (O(N^2) memory; use for small N only)."""
        return self.factor @ self.factor.T + torch.diag(self.diag)


GaussianPredictive: TypeAlias = DenseGaussian | LowRankDiagGaussian
