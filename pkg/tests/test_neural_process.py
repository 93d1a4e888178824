"""Tests for the convolutional Gaussian neural process."""

import numpy as np
import pytest
import torch

from placekit.app.errors import InvalidConfig, OutOfDomain, ShapeMismatch
from placekit.app.models import ContextSet, NPArchitecture, SyntheticEnvironment, Task
from placekit.app.models.environment import TaskSamplingConfig
from placekit.app.models.neural_process import GridEncoding, TrainConfig
from placekit.app.services.environment import date_splits
from placekit.app.services.neural_process import (
    NPModel,
    interpolate_representation,
    internal_grid,
    np_gradients,
    np_loss,
    np_train,
    setconv_encode,
)
from placekit.app.services.tasks import sample_sized_task, task_rng
from tests.conftest import observation_task

FD_STEP = 1e-5
FD_TOLERANCE = 1e-4
WEIGHTS_PER_TENSOR = 30


def _task(env: SyntheticEnvironment, seed: int = 0, n_context: int = 6) -> Task:
    return sample_sized_task(env, 5, task_rng(seed), n_context=n_context, n_targets=7)


def test_prediction_shapes(tiny_np: NPModel, small_env: SyntheticEnvironment) -> None:
    """Test mean, factor and diagonal shapes and diagonal positivity."""
    pred = tiny_np.predict(_task(small_env))

    assert pred.mean.shape == (7,)
    assert pred.factor.shape == (7, 3)
    assert bool(torch.all(pred.diag > 0))


def test_observation_order_does_not_change_output(
    tiny_np: NPModel, small_env: SyntheticEnvironment
) -> None:
    """Test bit-identical predictions under a permutation of the observations."""
    task = _task(small_env, n_context=8)
    order = np.random.default_rng(0).permutation(8)
    shuffled = task.model_copy(
        update={
            "contexts": [
                ContextSet(
                    locations=task.observations.locations[order],
                    values=task.observations.values[order],
                ),
                task.contexts[1],
            ]
        }
    )

    first = tiny_np.predict(task)
    second = tiny_np.predict(shuffled)

    assert torch.equal(first.mean, second.mean)
    assert torch.equal(first.factor, second.factor)
    assert torch.equal(first.diag, second.diag)


def test_batched_prediction_matches_single(
    tiny_np: NPModel, small_env: SyntheticEnvironment
) -> None:
    """Test that predict_batch agrees with one-at-a-time prediction."""
    tasks = [_task(small_env, seed=s) for s in range(3)]

    batched = tiny_np.predict_batch(tasks)

    for task, pred in zip(tasks, batched):
        single = tiny_np.predict(task)
        assert torch.allclose(single.mean, pred.mean, atol=1e-12)
        assert torch.allclose(single.factor, pred.factor, atol=1e-12)


def test_autograd_matches_finite_differences(
    tiny_np: NPModel, small_env: SyntheticEnvironment
) -> None:
    """Test weight gradients against central finite differences.

    Up to 30 weights are drawn from every tensor, which covers the
    convolutions, the resize path, the interpolation and all three heads.
    """
    task = _task(small_env)
    grads = np_gradients(tiny_np, task)
    rng = np.random.default_rng(0)

    for name, param in tiny_np.named_parameters():
        flat = param.data.view(-1)
        count = min(WEIGHTS_PER_TENSOR, flat.numel())
        for index in rng.choice(flat.numel(), size=count, replace=False):
            original = float(flat[index])
            with torch.no_grad():
                flat[index] = original + FD_STEP
                upper = float(np_loss(tiny_np, task))
                flat[index] = original - FD_STEP
                lower = float(np_loss(tiny_np, task))
                flat[index] = original
            numeric = (upper - lower) / (2 * FD_STEP)
            analytic = float(grads[name].view(-1)[index])
            assert abs(numeric - analytic) <= FD_TOLERANCE * max(1.0, abs(analytic)), (
                name,
                int(index),
            )


def test_setconv_density_at_a_node() -> None:
    """Test that a point on a node contributes exactly one to its density."""
    context = ContextSet(locations=np.array([[0.0, 0.0]]), values=np.array([[2.5]]))

    encoding = setconv_encode([context], ppu=4)

    centre = 4
    assert encoding.channels.shape == (2, 9, 9)
    assert float(encoding.channels[0, centre, centre]) == 1.0
    assert float(encoding.channels[1, centre, centre]) == 2.5


def test_setconv_empty_context_is_zero() -> None:
    """Test that an empty set encodes to zeros."""
    encoding = setconv_encode([ContextSet.empty()], ppu=4)

    assert not bool(torch.any(encoding.channels != 0))


def test_setconv_requires_a_context_set() -> None:
    """Test that encoding nothing is rejected."""
    with pytest.raises(ShapeMismatch):
        setconv_encode([], ppu=4)


def test_interpolation_is_exact_for_linear_fields() -> None:
    """Test that bilinear interpolation reproduces an affine field."""
    nodes = internal_grid(4)
    g1, g2 = torch.meshgrid(nodes, nodes, indexing="ij")
    representation = (0.5 + 2.0 * g1 - 3.0 * g2).unsqueeze(0)
    targets = np.random.default_rng(1).uniform(-1.0, 1.0, size=(20, 2))

    values = interpolate_representation(representation, targets)[:, 0].numpy()

    assert np.allclose(values, 0.5 + 2.0 * targets[:, 0] - 3.0 * targets[:, 1], atol=1e-12)


def test_interpolation_at_nodes_and_corners() -> None:
    """Test node values are returned exactly, including the domain corners."""
    representation = torch.arange(81, dtype=torch.float64).reshape(1, 9, 9)
    targets = np.array([[-1.0, -1.0], [1.0, 1.0], [0.0, 0.5]])

    values = interpolate_representation(representation, targets)[:, 0]

    assert values.tolist() == [0.0, 80.0, 42.0]


def test_interpolation_rejects_out_of_domain() -> None:
    """Test that targets outside [-1, 1]^2 raise OutOfDomain."""
    with pytest.raises(OutOfDomain):
        interpolate_representation(torch.zeros(1, 9, 9, dtype=torch.float64), [[1.2, 0.0]])


def test_encoding_channel_mismatch(tiny_np: NPModel) -> None:
    """Test that a task without the auxiliary set is rejected."""
    task = observation_task([[0.0, 0.0]], [1.0], np.zeros((1, 2)))

    with pytest.raises(ShapeMismatch):
        tiny_np.predict(task)


def test_loss_needs_target_values(tiny_np: NPModel, small_env: SyntheticEnvironment) -> None:
    """Test that the training loss is undefined without target values."""
    task = _task(small_env).with_targets(np.zeros((2, 2)))

    with pytest.raises(ShapeMismatch):
        np_loss(tiny_np, task)


def test_prior_covariance_includes_diagonal_at_anchor(
    tiny_np: NPModel, small_env: SyntheticEnvironment
) -> None:
    """Test that the anchor's own entry is its predicted marginal variance."""
    task = _task(small_env, n_context=0)
    locations = np.array([[0.0, 0.0], [0.5, 0.5]])

    cov = tiny_np.prior_covariance([0.0, 0.0], locations, task)

    expected = tiny_np.predict(task.with_targets(locations[:1])).marginal_variances()
    assert cov.shape == (2,)
    assert cov[0] == pytest.approx(float(expected[0]))


def test_train_restores_best_weights(
    tiny_architecture: NPArchitecture, small_env: SyntheticEnvironment
) -> None:
    """Test a short training run records history and keeps the best epoch."""
    model = NPModel(tiny_architecture)
    cfg = TrainConfig(max_epochs=2, tasks_per_epoch=2, n_val_tasks=2, batch_size=2)
    task_cfg = TaskSamplingConfig(nc_min=2, nc_max=10, nt_min=5, nt_max=10)

    model, history = np_train(model, small_env, date_splits(small_env), cfg, task_cfg)

    assert [record.epoch for record in history] == [1, 2]
    assert history[0].checkpointed
    assert all(np.isfinite(record.val_nll) for record in history)


def test_setconv_is_additive_over_disjoint_sets() -> None:
    """Test that encoding a union equals the sum of the separate encodings."""
    rng = np.random.default_rng(2)
    first = ContextSet(locations=rng.uniform(-1, 1, (5, 2)), values=rng.normal(size=(5, 1)))
    second = ContextSet(locations=rng.uniform(-1, 1, (4, 2)), values=rng.normal(size=(4, 1)))
    union = ContextSet(
        locations=np.vstack([first.locations, second.locations]),
        values=np.vstack([first.values, second.values]),
    )

    combined = setconv_encode([union], ppu=4).channels
    separate = setconv_encode([first], ppu=4).channels + setconv_encode([second], ppu=4).channels

    assert torch.allclose(combined, separate, rtol=0.0, atol=1e-12)


def test_setconv_coincident_points_double_the_density() -> None:
    """Test that two observations on one node give density 2 there."""
    context = ContextSet(locations=np.array([[0.5, -0.5], [0.5, -0.5]]), values=np.zeros((2, 1)))

    encoding = setconv_encode([context], ppu=4)

    assert float(encoding.channels[0, 6, 2]) == 2.0
    assert float(encoding.channels[1, 6, 2]) == 0.0


@pytest.mark.parametrize("size", [9, 17, 33])
def test_backbone_restores_the_input_grid(size: int) -> None:
    """Test that pooling twice and resizing back returns every odd grid size."""
    model = NPModel(NPArchitecture(ppu=4, channels=4, levels=2, rank=2, head_hidden=4))
    channels = model.architecture.input_channels
    encoding = GridEncoding(channels=torch.zeros(channels, size, size, dtype=torch.float64), ppu=4)

    representation = model.backbone_forward(encoding)

    assert representation.shape == (4, size, size)
    assert bool(torch.all(torch.isfinite(representation)))


def test_architecture_rejects_a_grid_pooled_away() -> None:
    """Test that too many pooling stages for the internal grid are rejected."""
    assert NPArchitecture(ppu=2, levels=2).coarsest_points == 1

    with pytest.raises(InvalidConfig):
        NPArchitecture(ppu=2, levels=3)


def test_context_influence_is_local(small_env: SyntheticEnvironment) -> None:
    """Test that changing one observation moves nearby predictions far more than distant ones."""
    model = NPModel(NPArchitecture(ppu=16, channels=4, levels=1, rank=2, head_hidden=8))
    site = [[-0.875, -0.875]]
    targets = np.array([[-0.875, -0.875], [0.875, 0.875]])

    low = model.predict(observation_task(site, [0.0], targets, env=small_env))
    high = model.predict(observation_task(site, [2.0], targets, env=small_env))

    change = (
        (high.mean - low.mean).abs()
        + (high.factor - low.factor).norm(dim=1)
        + (high.diag - low.diag).abs()
    )
    near, far = float(change[0]), float(change[1])
    assert near > 0.0
    assert near >= 10.0 * far


def test_gradients_are_deterministic(tiny_np: NPModel, small_env: SyntheticEnvironment) -> None:
    """Test that two gradient computations on the same task are bit-identical."""
    task = _task(small_env)

    first = np_gradients(tiny_np, task)
    second = np_gradients(tiny_np, task)

    assert first.keys() == second.keys()
    for name in first:
        assert torch.equal(first[name], second[name]), name


def test_single_task_overfit(
    tiny_architecture: NPArchitecture, small_env: SyntheticEnvironment
) -> None:
    """Test that 200 Adam steps on one task lower its NLL by at least a nat per target."""
    model = NPModel(tiny_architecture)
    task = _task(small_env)
    optimizer = torch.optim.Adam(model.parameters(), lr=1e-2)
    untrained = np_loss(model, task).item()

    for _ in range(200):
        optimizer.zero_grad()
        loss = np_loss(model, task)
        loss.backward()
        optimizer.step()

    assert np_loss(model, task).item() <= untrained - 1.0


def test_zero_learning_rate_leaves_weights_unchanged(
    tiny_architecture: NPArchitecture, small_env: SyntheticEnvironment
) -> None:
    """Test one epoch on one task with learning rate 0."""
    model = NPModel(tiny_architecture)
    initial = {name: t.clone() for name, t in model.state_dict().items()}
    cfg = TrainConfig(
        learning_rate=0.0, max_epochs=1, tasks_per_epoch=1, n_val_tasks=1, batch_size=1
    )
    task_cfg = TaskSamplingConfig(nc_min=2, nc_max=4, nt_min=3, nt_max=5)

    model, _ = np_train(model, small_env, date_splits(small_env), cfg, task_cfg)

    for name, tensor in model.state_dict().items():
        assert torch.equal(tensor, initial[name]), name
