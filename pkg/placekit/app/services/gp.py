"""Exact GP baselines with EQ, RQ and Gibbs kernels."""

import copy
import logging
import math

import numpy as np
import torch
from pydantic import BaseModel, Field
from torch import nn

from placekit.app.errors import InvalidConfig, OptimizationDiverged, ShapeMismatch
from placekit.app.models.experiment_config import GPSection
from placekit.app.models.gaussian import DenseGaussian
from placekit.app.models.kernel_params import (
    NOISE_FLOOR,
    EQParams,
    GibbsParams,
    KernelParams,
    KernelVariant,
    RQParams,
    basis_grid,
)
from placekit.app.models.task import ContextSet, Normalizer, Task
from placekit.app.prometheus import track_best_validation, track_training_step
from placekit.app.services.core_math import DTYPE, as_tensor, cholesky_psd, dense_logpdf
from placekit.app.services.kernels import basis_lengthscales, eq_matrix, gibbs_matrix, rq_matrix
from placekit.app.telemetry import trace_method

logger = logging.getLogger(__name__)

DEFAULT_LENGTHSCALE = 0.3


class KernelParametrization(nn.Module):
    """Unconstrained (log-space) view of KernelParams for gradient descent."""

    def __init__(self, params: KernelParams) -> None:
        super().__init__()
        self.variant: KernelVariant = params.variant
        self.log_variance = nn.Parameter(torch.tensor(math.log(params.variance), dtype=DTYPE))
        self.log_noise = nn.Parameter(
            torch.tensor(math.log(max(params.noise_var - NOISE_FLOOR, 1e-12)), dtype=DTYPE)
        )
        self.centers: torch.Tensor | None = None
        self.basis_scale = 0.0
        if isinstance(params, (EQParams, RQParams)):
            self.log_lengthscales = nn.Parameter(
                torch.log(as_tensor([params.lengthscale_1, params.lengthscale_2]))
            )
        if isinstance(params, RQParams):
            self.log_alpha = nn.Parameter(torch.tensor(math.log(params.alpha), dtype=DTYPE))
        if isinstance(params, GibbsParams):
            self.log_theta = nn.Parameter(
                torch.log(torch.stack([as_tensor(params.theta_1), as_tensor(params.theta_2)]))
            )
            self.centers = as_tensor(params.centers)
            self.basis_scale = params.basis_scale

    def noise_var(self) -> torch.Tensor:
        """Observation noise variance, floored at NOISE_FLOOR."""
        return NOISE_FLOOR + torch.exp(self.log_noise)

    def point_lengthscales(self, x: torch.Tensor) -> torch.Tensor:
        """Gibbs length scales at each location, shape (N, 2)."""
        assert self.centers is not None
        theta = torch.exp(self.log_theta)
        return torch.stack(
            [basis_lengthscales(x, theta[i], self.centers, self.basis_scale) for i in range(2)],
            dim=1,
        )

    def kernel(self, x: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        """Prior covariance between two location sets."""
        variance = torch.exp(self.log_variance)
        if self.variant == "eq":
            return eq_matrix(x, z, variance, torch.exp(self.log_lengthscales))
        if self.variant == "rq":
            return rq_matrix(
                x, z, variance, torch.exp(self.log_lengthscales), torch.exp(self.log_alpha)
            )
        return gibbs_matrix(x, z, variance, self.point_lengthscales(x), self.point_lengthscales(z))

    def symmetric_kernel(self, x: torch.Tensor) -> torch.Tensor:
        """Prior covariance of a location set with itself."""
        if self.variant == "gibbs":
            scales = self.point_lengthscales(x)
            return gibbs_matrix(x, x, torch.exp(self.log_variance), scales, scales)
        return self.kernel(x, x)

    def to_params(self) -> KernelParams:
        """Constrained parameters as a frozen KernelParams value."""
        with torch.no_grad():
            common = {
                "variance": float(torch.exp(self.log_variance)),
                "noise_var": float(self.noise_var()),
            }
            if self.variant == "gibbs":
                assert self.centers is not None
                theta = torch.exp(self.log_theta).numpy()
                return GibbsParams(
                    theta_1=theta[0].copy(),
                    theta_2=theta[1].copy(),
                    centers=self.centers.numpy().copy(),
                    basis_scale=self.basis_scale,
                    **common,
                )
            l1, l2 = (float(v) for v in torch.exp(self.log_lengthscales))
            if self.variant == "rq":
                return RQParams(
                    lengthscale_1=l1,
                    lengthscale_2=l2,
                    alpha=float(torch.exp(self.log_alpha)),
                    **common,
                )
            return EQParams(lengthscale_1=l1, lengthscale_2=l2, **common)


def _posterior(
    module: KernelParametrization, context: ContextSet, target_locations: object
) -> DenseGaussian:
    targets = as_tensor(target_locations).reshape(-1, 2)
    n_t = targets.shape[0]
    prior = module.symmetric_kernel(targets)
    if context.size == 0:
        return DenseGaussian(mean=torch.zeros(n_t, dtype=DTYPE), cov=prior)
    x_c = as_tensor(context.locations)
    y_c = as_tensor(context.values[:, 0])
    k_cc = module.symmetric_kernel(x_c) + module.noise_var() * torch.eye(x_c.shape[0], dtype=DTYPE)
    factor = cholesky_psd(k_cc)
    k_ct = module.kernel(x_c, targets)
    projected = torch.linalg.solve_triangular(factor, k_ct, upper=False)
    whitened_y = torch.linalg.solve_triangular(factor, y_c.unsqueeze(1), upper=False)
    mean = (projected.T @ whitened_y).squeeze(1)
    cov = prior - projected.T @ projected
    return DenseGaussian(mean=mean, cov=0.5 * (cov + cov.T))


def gp_predict(
    params: KernelParams, context: ContextSet, target_locations: object
) -> DenseGaussian:
    """Exact GP posterior of the latent field at the targets.

    The context diagonal carries ``noise_var``; the target covariance does
    not. An empty context returns the prior.
    """
    with torch.no_grad():
        return _posterior(KernelParametrization(params), context, target_locations)


def _nlml(module: KernelParametrization, context: ContextSet) -> torch.Tensor:
    x_c = as_tensor(context.locations)
    prior = DenseGaussian(
        mean=torch.zeros(x_c.shape[0], dtype=DTYPE), cov=module.symmetric_kernel(x_c)
    )
    return -dense_logpdf(prior, context.values[:, 0], noise_var=module.noise_var())


def gp_nlml(params: KernelParams, task: Task) -> float:
    """Negative log marginal likelihood of the observation context."""
    if task.observations.size == 0:
        raise ShapeMismatch("NLML needs at least one observation context point")
    with torch.no_grad():
        return float(_nlml(KernelParametrization(params), task.observations))


class GPFitResult(BaseModel):
    """Fitted parameters plus the per-epoch loss history (epoch 0 = initial)."""

    params: KernelParams
    history: list[tuple[int, float, float]] = Field(default_factory=list)
    best_epoch: int = 0


def initial_params(
    variant: KernelVariant, tasks: list[Task], basis_per_side: int = 10
) -> KernelParams:
    """Starting point: empirical variance, length scale 0.3, noise 1e-2 of variance."""
    values = np.concatenate([t.observations.values[:, 0] for t in tasks])
    variance = float(max(np.var(values), 1e-3)) if values.size > 1 else 1.0
    noise = max(0.01 * variance, 2 * NOISE_FLOOR)
    if variant == "eq":
        return EQParams(
            variance=variance,
            noise_var=noise,
            lengthscale_1=DEFAULT_LENGTHSCALE,
            lengthscale_2=DEFAULT_LENGTHSCALE,
        )
    if variant == "rq":
        return RQParams(
            variance=variance,
            noise_var=noise,
            lengthscale_1=DEFAULT_LENGTHSCALE,
            lengthscale_2=DEFAULT_LENGTHSCALE,
            alpha=1.0,
        )
    centers, spacing = basis_grid(basis_per_side)
    basis_at_origin = basis_lengthscales(
        torch.zeros(1, 2, dtype=DTYPE),
        torch.ones(len(centers), dtype=DTYPE),
        as_tensor(centers),
        spacing,
    )
    theta = np.full(len(centers), DEFAULT_LENGTHSCALE / float(basis_at_origin[0]))
    return GibbsParams(
        variance=variance,
        noise_var=noise,
        theta_1=theta,
        theta_2=theta.copy(),
        centers=centers,
        basis_scale=spacing,
    )


def _mean_loss(module: KernelParametrization, tasks: list[Task]) -> torch.Tensor:
    losses = [_nlml(module, t.observations) / t.observations.size for t in tasks]
    return torch.stack(losses).mean()


@trace_method("fit_gp")
def fit_gp(
    variant: KernelVariant,
    train_tasks: list[Task],
    cfg: GPSection,
    val_tasks: list[Task] | None = None,
    initial: KernelParams | None = None,
) -> GPFitResult:
    """Fit kernel hyperparameters by Adam on the per-point NLML.

    Parameters are optimised in log space. The returned parameters are the
    best by validation loss (training loss when no validation tasks are
    given), with the initial parameters counted as epoch 0, so the fitted
    loss never exceeds the initial loss.

    ``initial`` replaces the default starting point of :func:`initial_params`;
    its variant must match ``variant``.

    Raises:
        InvalidConfig: If no training task has observations, or ``initial``
            is of another variant.
        OptimizationDiverged: If the loss becomes non-finite.
    """
    train_tasks = [t for t in train_tasks if t.observations.size > 0]
    if not train_tasks:
        raise InvalidConfig("fit_gp needs at least one training task with observations")
    monitor = [t for t in (val_tasks or []) if t.observations.size > 0] or train_tasks

    if initial is None:
        initial = initial_params(variant, train_tasks, cfg.basis_per_side)
    elif initial.variant != variant:
        raise InvalidConfig(f"initial parameters are {initial.variant}, not {variant}")
    module = KernelParametrization(initial)
    optimizer = torch.optim.Adam(module.parameters(), lr=cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)

    with torch.no_grad():
        best_loss = float(_mean_loss(module, monitor))
    if not math.isfinite(best_loss):
        raise OptimizationDiverged(f"{variant} GP initial loss is not finite")
    best_state = copy.deepcopy(module.state_dict())
    history = [(0, best_loss, best_loss)]
    best_epoch, stale = 0, 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_tasks))
        train_losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_tasks[i] for i in order[start : start + cfg.batch_size]]
            optimizer.zero_grad()
            loss = _mean_loss(module, batch)
            if not torch.isfinite(loss):
                raise OptimizationDiverged(f"{variant} GP loss became non-finite at epoch {epoch}")
            loss.backward()
            optimizer.step()
            track_training_step(variant)
            train_losses.append(loss.item())

        with torch.no_grad():
            val_loss = float(_mean_loss(module, monitor))
        if not math.isfinite(val_loss):
            raise OptimizationDiverged(f"{variant} GP validation loss non-finite at epoch {epoch}")
        history.append((epoch, float(np.mean(train_losses)), val_loss))
        logger.debug(
            "%s GP epoch %d: train %.4f val %.4f", variant, epoch, history[-1][1], val_loss
        )

        if val_loss < best_loss:
            best_loss, best_epoch, stale = val_loss, epoch, 0
            best_state = copy.deepcopy(module.state_dict())
        else:
            stale += 1
            if stale >= cfg.patience:
                logger.info("%s GP early stop at epoch %d", variant, epoch)
                break

    module.load_state_dict(best_state)
    params = module.to_params()
    track_best_validation(variant, best_loss)
    logger.info(
        "%s GP fitted: best epoch %d, loss %.4f nats/point, noise %.3g",
        variant,
        best_epoch,
        best_loss,
        params.noise_var,
    )
    return GPFitResult(params=params, history=history, best_epoch=best_epoch)


class GPModel:
    """A fitted GP baseline bound to the normalizer of its training data.

    Only the observation context set is used; GPs have no way to condition
    on the auxiliary grid.
    """

    def __init__(self, name: str, params: KernelParams, normalizer: Normalizer | None = None):
        self.name = name
        self.params = params
        self.normalizer = normalizer or Normalizer()
        self._module = KernelParametrization(params)

    @property
    def noise_var(self) -> float:
        """Observation noise variance."""
        return self.params.noise_var

    def predict(self, task: Task, *, latent: bool = False) -> DenseGaussian:
        """Posterior at the task targets.

        Args:
            task: Task whose observation context is conditioned on.
            latent: Return the latent-field posterior instead of the
                predictive for new observations (which adds ``noise_var``).
        """
        with torch.no_grad():
            posterior = _posterior(self._module, task.observations, task.target_locations)
        if latent:
            return posterior
        cov = posterior.cov + self.noise_var * torch.eye(posterior.size, dtype=DTYPE)
        return DenseGaussian(mean=posterior.mean, cov=cov)

    def prior_covariance(self, anchor: object, locations: object) -> np.ndarray:
        """k(anchor, x) for every x in ``locations``."""
        with torch.no_grad():
            x = as_tensor(anchor).reshape(1, 2)
            return self._module.kernel(x, as_tensor(locations).reshape(-1, 2))[0].numpy()
