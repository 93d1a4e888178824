"""Convolutional Gaussian neural process with a low-rank-plus-diagonal covariance.

Pipeline: SetConv encoding of every context set onto an internal grid,
a U-Net backbone, bilinear interpolation of the representation at the
targets, then three pointwise heads for the mean, the covariance basis
vectors and a positive diagonal.
"""

import copy
import logging
import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from placekit.app.errors import OptimizationDiverged, ShapeMismatch
from placekit.app.models.environment import DateSplits, SyntheticEnvironment, TaskSamplingConfig
from placekit.app.models.gaussian import LowRankDiagGaussian
from placekit.app.models.neural_process import (
    EpochRecord,
    GridEncoding,
    NPArchitecture,
    TrainConfig,
)
from placekit.app.models.task import ContextSet, Normalizer, Task, check_in_domain
from placekit.app.prometheus import track_best_validation, track_training_step
from placekit.app.services.core_math import DTYPE, as_tensor, lowrank_logpdf
from placekit.app.services.tasks import sample_task, task_rng
from placekit.app.telemetry import trace_method

logger = logging.getLogger(__name__)

TRAIN_STREAM = 0x7A1
VAL_STREAM = 0x7A2
NODE_SNAP = 1e-9


def internal_grid(ppu: int) -> torch.Tensor:
    """Node coordinates of the internal grid along one axis."""
    return torch.linspace(-1.0, 1.0, 2 * ppu + 1, dtype=DTYPE)


def _setconv_channels(context: ContextSet, nodes: torch.Tensor, scale: float) -> torch.Tensor:
    """Density channel followed by one data channel per value dimension, (1 + V, H, W)."""
    h = nodes.shape[0]
    if context.size == 0:
        return torch.zeros(1 + context.channels, h, h, dtype=DTYPE)
    # Canonical point order keeps the reduction order, and so the output bits,
    # independent of how the caller ordered the observations.
    keys = [context.values[:, c] for c in reversed(range(context.channels))]
    order = np.lexsort([*keys, context.locations[:, 1], context.locations[:, 0]])
    locations = as_tensor(context.locations[order])
    values = as_tensor(context.values[order])
    w1 = torch.exp(-((locations[:, 0:1] - nodes.unsqueeze(0)) ** 2) / (2.0 * scale**2))
    w2 = torch.exp(-((locations[:, 1:2] - nodes.unsqueeze(0)) ** 2) / (2.0 * scale**2))
    weighted = torch.cat([torch.ones(values.shape[0], 1, dtype=DTYPE), values], dim=1)
    return torch.einsum("pc,pi,pj->cij", weighted, w1, w2)


def setconv_encode(contexts: list[ContextSet], ppu: int) -> GridEncoding:
    """Smooth every context set onto the internal grid.

    Each set contributes a density channel (sum of unit-amplitude Gaussian
    bumps of length scale ``2 / ppu``) and its data channels (bumps weighted
    by the values), in the order the sets are given.
    """
    if not contexts:
        raise ShapeMismatch("at least one context set is required")
    nodes = internal_grid(ppu)
    scale = 2.0 / ppu
    for context in contexts:
        check_in_domain(context.locations, "context locations")
    channels = torch.cat([_setconv_channels(c, nodes, scale) for c in contexts], dim=0)
    return GridEncoding(channels=channels, ppu=ppu)


def interpolate_representation(
    representation: torch.Tensor, target_locations: object
) -> torch.Tensor:
    """Bilinear interpolation of a (C, H, W) grid over [-1, 1]^2 at the targets.

    Targets on grid nodes return the node values exactly.

    Returns:
        Tensor of shape (N_t, C).

    Raises:
        OutOfDomain: For targets outside [-1, 1]^2.
    """
    targets = np.asarray(target_locations, dtype=np.float64).reshape(-1, 2)
    check_in_domain(targets, "target locations")
    _, h, w = representation.shape
    sizes = np.array([h - 1, w - 1], dtype=np.float64)
    position = (np.clip(targets, -1.0, 1.0) + 1.0) * sizes / 2.0
    snapped = np.rint(position)
    position = np.where(np.abs(position - snapped) < NODE_SNAP, snapped, position)
    lower = np.minimum(np.floor(position), sizes - 1).astype(np.int64)
    frac = torch.from_numpy(position - lower)
    i0 = torch.from_numpy(lower[:, 0])
    j0 = torch.from_numpy(lower[:, 1])
    t1 = frac[:, 0].unsqueeze(1)
    t2 = frac[:, 1].unsqueeze(1)
    grid = representation.permute(1, 2, 0)
    return (
        (1.0 - t1) * (1.0 - t2) * grid[i0, j0]
        + (1.0 - t1) * t2 * grid[i0, j0 + 1]
        + t1 * (1.0 - t2) * grid[i0 + 1, j0]
        + t1 * t2 * grid[i0 + 1, j0 + 1]
    )


class UNet(nn.Module):
    """Fully convolutional U-Net with average-pool downsampling and
    bilinear-resize-then-convolve upsampling.
    """

    def __init__(self, in_channels: int, channels: int, levels: int, kernel_size: int) -> None:
        super().__init__()
        padding = kernel_size // 2
        self.levels = levels
        self.inc = nn.Conv2d(in_channels, channels, kernel_size, padding=padding)
        self.down = nn.ModuleList(
            nn.Conv2d(channels, channels, kernel_size, padding=padding) for _ in range(levels)
        )
        self.up = nn.ModuleList(
            nn.Conv2d(2 * channels, channels, kernel_size, padding=padding) for _ in range(levels)
        )
        self.pool = nn.AvgPool2d(2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.relu(self.inc(x))
        skips = []
        for conv in self.down:
            skips.append(x)
            x = F.relu(conv(self.pool(x)))
        for conv, skip in zip(self.up, reversed(skips)):
            x = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=True)
            x = F.relu(conv(torch.cat([x, skip], dim=1)))
        return x


def _mlp(in_features: int, hidden: int, out_features: int) -> nn.Sequential:
    return nn.Sequential(nn.Linear(in_features, hidden), nn.ReLU(), nn.Linear(hidden, out_features))


class NPModel(nn.Module):
    """Desk-scale ConvGNP.

    Attributes:
        architecture: Encoder/backbone/head sizes.
        normalizer: Maps target-variable units to the model's unit scale.
    """

    def __init__(
        self,
        architecture: NPArchitecture,
        normalizer: Normalizer | None = None,
        name: str = "np",
    ) -> None:
        super().__init__()
        self.architecture = architecture
        self.normalizer = normalizer or Normalizer()
        self.name = name
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(architecture.init_seed)
            self.backbone = UNet(
                architecture.input_channels,
                architecture.channels,
                architecture.levels,
                architecture.kernel_size,
            )
            self.head_f = _mlp(architecture.channels, architecture.head_hidden, 1)
            self.head_g = _mlp(architecture.channels, architecture.head_hidden, architecture.rank)
            self.head_d = _mlp(architecture.channels, architecture.head_hidden, 1)
            self._init_weights()
        self.to(DTYPE)

    def _init_weights(self) -> None:
        for module in self.modules():
            if isinstance(module, (nn.Conv2d, nn.Linear)):
                nn.init.kaiming_normal_(module.weight, mode="fan_in", nonlinearity="relu")
                nn.init.zeros_(module.bias)
        # Small initial covariance basis; the diagonal head starts near softplus(0).
        nn.init.normal_(self.head_g[-1].weight, std=0.1 / math.sqrt(self.architecture.head_hidden))

    @property
    def ppu(self) -> int:
        """Internal grid density."""
        return self.architecture.ppu

    def encode(self, task: Task) -> GridEncoding:
        """SetConv encoding of the task's context sets."""
        encoding = setconv_encode(task.contexts, self.ppu)
        if encoding.channels.shape[0] != self.architecture.input_channels:
            raise ShapeMismatch(
                f"encoding has {encoding.channels.shape[0]} channels, model expects "
                f"{self.architecture.input_channels}"
            )
        return encoding

    def backbone_forward(self, encoding: GridEncoding) -> torch.Tensor:
        """(C, H, W) encoding -> (C_r, H, W) representation."""
        if encoding.channels.shape[0] != self.architecture.input_channels:
            raise ShapeMismatch("encoding width does not match the backbone input")
        return self.backbone(encoding.channels.unsqueeze(0))[0]

    def heads(self, features: torch.Tensor) -> LowRankDiagGaussian:
        """Mean, covariance basis and diagonal from per-target features."""
        mean = self.head_f(features).squeeze(-1)
        factor = self.head_g(features)
        diag = F.softplus(self.head_d(features).squeeze(-1)) + self.architecture.diag_floor
        return LowRankDiagGaussian(mean=mean, factor=factor, diag=diag)

    def forward(self, task: Task) -> LowRankDiagGaussian:
        representation = self.backbone_forward(self.encode(task))
        return self.heads(interpolate_representation(representation, task.target_locations))

    def forward_batch(self, tasks: list[Task]) -> list[LowRankDiagGaussian]:
        """Predict several tasks with one batched backbone pass."""
        if not tasks:
            return []
        encodings = torch.stack([self.encode(t).channels for t in tasks])
        representations = self.backbone(encodings)
        return [
            self.heads(interpolate_representation(r, t.target_locations))
            for r, t in zip(representations, tasks)
        ]

    def predict(self, task: Task, *, latent: bool = False) -> LowRankDiagGaussian:
        """Predictive at the task targets, without gradient tracking.

        ``latent`` exists for parity with the GP models; the learned diagonal
        is always part of the output.
        """
        with torch.no_grad():
            return self(task)

    def predict_batch(self, tasks: list[Task]) -> list[LowRankDiagGaussian]:
        """Batched :meth:`predict`."""
        with torch.no_grad():
            return self.forward_batch(tasks)

    def prior_covariance(self, anchor: object, locations: object, task: Task) -> np.ndarray:
        """Predicted covariance between ``anchor`` and every location.

        ``task`` supplies the context sets (typically with an empty
        observation set). The diagonal term only enters where a location
        coincides with the anchor.
        """
        anchor = np.asarray(anchor, dtype=np.float64).reshape(1, 2)
        locations = np.asarray(locations, dtype=np.float64).reshape(-1, 2)
        pred = self.predict(task.with_targets(np.vstack([anchor, locations])))
        cov = (pred.factor[1:] @ pred.factor[0]).numpy()
        same = np.all(locations == anchor, axis=1)
        cov[same] += float(pred.diag[0])
        return cov


def np_predict(model: NPModel, task: Task) -> LowRankDiagGaussian:
    """Differentiable prediction at the task targets."""
    return model(task)


def np_loss(model: NPModel, task: Task) -> torch.Tensor:
    """Negative log-likelihood of the targets divided by N_t."""
    if task.target_values is None:
        raise ShapeMismatch("np_loss needs target values")
    prediction = model(task)
    return -lowrank_logpdf(prediction, task.target_values) / task.n_targets


def np_gradients(model: NPModel, task: Task) -> dict[str, torch.Tensor]:
    """Gradient of :func:`np_loss` with respect to every weight."""
    names, params = zip(*model.named_parameters())
    grads = torch.autograd.grad(np_loss(model, task), params)
    return dict(zip(names, grads))


def _mean_nll(model: NPModel, tasks: list[Task]) -> float:
    with torch.no_grad():
        return float(np.mean([float(np_loss(model, t)) for t in tasks]))


def validation_tasks(
    env: SyntheticEnvironment,
    dates: list[int],
    count: int,
    task_cfg: TaskSamplingConfig,
    normalizer: Normalizer,
    seed: int,
) -> list[Task]:
    """Fixed-seed validation tasks, identical on every call."""
    rng = task_rng(seed, VAL_STREAM)
    picks = rng.choice(dates, size=count, replace=len(dates) < count)
    return [sample_task(env, int(d), rng, task_cfg, normalizer) for d in picks]


@trace_method("np_train")
def np_train(
    model: NPModel,
    env: SyntheticEnvironment,
    splits: DateSplits,
    cfg: TrainConfig,
    task_cfg: TaskSamplingConfig,
) -> tuple[NPModel, list[EpochRecord]]:
    """Train with Adam on batches of freshly sampled tasks.

    Training tasks are resampled every epoch from an epoch-specific seed;
    validation tasks are fixed. The weights with the lowest validation NLL
    are restored before returning.

    Raises:
        OptimizationDiverged: On a non-finite training loss.
    """
    if not splits.train or not splits.val:
        raise ShapeMismatch("training needs non-empty train and validation splits")
    normalizer = model.normalizer
    val_tasks = validation_tasks(env, splits.val, cfg.n_val_tasks, task_cfg, normalizer, cfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)

    history: list[EpochRecord] = []
    best_val = math.inf
    best_state = copy.deepcopy(model.state_dict())
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        rng = task_rng(cfg.seed, TRAIN_STREAM, epoch)
        dates = rng.choice(splits.train, size=cfg.tasks_per_epoch)
        tasks = [sample_task(env, int(d), rng, task_cfg, normalizer) for d in dates]

        model.train()
        losses = []
        for start in range(0, len(tasks), cfg.batch_size):
            batch = tasks[start : start + cfg.batch_size]
            optimizer.zero_grad()
            loss = torch.stack([np_loss(model, t) for t in batch]).mean()
            if not torch.isfinite(loss):
                raise OptimizationDiverged(f"neural process loss non-finite at epoch {epoch}")
            loss.backward()
            optimizer.step()
            track_training_step(model.name)
            losses.append(loss.item())
        model.eval()

        val_nll = _mean_nll(model, val_tasks)
        improved = val_nll < best_val
        if improved:
            best_val, stale = val_nll, 0
            best_state = copy.deepcopy(model.state_dict())
        else:
            stale += 1
        history.append(
            EpochRecord(
                epoch=epoch,
                train_nll=float(np.mean(losses)),
                val_nll=val_nll,
                checkpointed=improved,
            )
        )
        logger.info(
            "epoch %d: train %.4f val %.4f%s",
            epoch,
            history[-1].train_nll,
            val_nll,
            " (checkpoint)" if improved else "",
        )
        if stale >= cfg.patience:
            logger.info("Early stop after %d epochs without improvement", stale)
            break

    model.load_state_dict(best_state)
    track_best_validation(model.name, best_val)
    return model, history
