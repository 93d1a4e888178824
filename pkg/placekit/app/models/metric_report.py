"""Aggregated evaluation metrics."""

import math

from pydantic import BaseModel, Field, field_validator


class MetricReport(BaseModel):
    """Headline metrics averaged over tasks, with standard errors.

    Attributes:
        rmse: Root-mean-square error in target-variable units.
        marginal_nll: Mean marginal negative log-likelihood, nats per target.
        joint_nll_normalized: Joint negative log-likelihood divided by N_t.
        mean_marginal_variance: Mean predictive variance over targets.
        n_targets: Total number of scored targets.
        n_tasks: Number of tasks averaged over.
    """

    rmse: float = Field(..., ge=0)
    marginal_nll: float
    joint_nll_normalized: float
    mean_marginal_variance: float = Field(..., ge=0)
    n_targets: int = Field(..., ge=1)
    n_tasks: int = Field(..., ge=1)
    rmse_stderr: float = 0.0
    marginal_nll_stderr: float = 0.0
    joint_nll_normalized_stderr: float = 0.0
    mean_marginal_variance_stderr: float = 0.0

    @field_validator(
        "rmse", "marginal_nll", "joint_nll_normalized", "mean_marginal_variance"
    )
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("metric must be finite")
        return value

    def headline(self) -> dict[str, tuple[float, float]]:
        """Metric name -> (value, stderr)."""
        return {
            "rmse": (self.rmse, self.rmse_stderr),
            "marginal_nll": (self.marginal_nll, self.marginal_nll_stderr),
            "joint_nll_normalized": (
                self.joint_nll_normalized,
                self.joint_nll_normalized_stderr,
            ),
            "mean_marginal_variance": (
                self.mean_marginal_variance,
                self.mean_marginal_variance_stderr,
            ),
        }
