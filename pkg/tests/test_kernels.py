"""Tests for the GP kernels."""

import numpy as np
import pytest
import torch

from placekit.app.errors import InvalidConfig
from placekit.app.models import EQParams, GibbsParams, RQParams
from placekit.app.models.kernel_params import basis_grid
from placekit.app.services.core_math import DTYPE
from placekit.app.services.kernels import (
    basis_lengthscales,
    eq_matrix,
    gibbs_matrix,
    kernel_eval,
    kernel_matrix,
    lengthscale_field,
    rq_matrix,
)


def _points(count: int, seed: int = 0) -> torch.Tensor:
    rng = np.random.default_rng(seed)
    return torch.as_tensor(rng.uniform(-1.0, 1.0, size=(count, 2)), dtype=DTYPE)


def _gibbs(variance: float = 1.3) -> GibbsParams:
    centers, spacing = basis_grid(3)
    rng = np.random.default_rng(7)
    return GibbsParams(
        variance=variance,
        theta_1=rng.uniform(0.1, 0.5, size=9),
        theta_2=rng.uniform(0.1, 0.5, size=9),
        centers=centers,
        basis_scale=spacing,
    )


def test_gibbs_with_constant_lengthscales_is_eq() -> None:
    """Test that constant length-scale fields reduce Gibbs to EQ exactly."""
    x = _points(40, seed=1)
    z = _points(30, seed=2)
    variance = torch.tensor(0.7, dtype=DTYPE)
    scales = torch.tensor([0.25, 0.6], dtype=DTYPE)

    gibbs = gibbs_matrix(x, z, variance, scales.expand(40, 2), scales.expand(30, 2))
    eq = eq_matrix(x, z, variance, scales)

    assert float((gibbs - eq).abs().max()) <= 1e-12


def test_rq_approaches_eq_for_large_alpha() -> None:
    """Test that RQ with alpha = 1e6 matches EQ to 1e-4."""
    x = _points(50, seed=3)
    variance = torch.tensor(1.0, dtype=DTYPE)
    scales = torch.tensor([0.3, 0.4], dtype=DTYPE)

    rq = rq_matrix(x, x, variance, scales, torch.tensor(1e6, dtype=DTYPE))
    eq = eq_matrix(x, x, variance, scales)

    assert float((rq - eq).abs().max()) <= 1e-4


@pytest.mark.parametrize(
    "params",
    [
        EQParams(variance=1.3, lengthscale_1=0.2, lengthscale_2=0.5),
        RQParams(variance=1.3, lengthscale_1=0.2, lengthscale_2=0.5, alpha=0.8),
        _gibbs(),
    ],
    ids=["eq", "rq", "gibbs"],
)
def test_kernel_is_symmetric_with_variance_on_diagonal(
    params: EQParams | RQParams | GibbsParams,
) -> None:
    """Test k(x, z) = k(z, x) and k(x, x) = variance on 1000 random points."""
    x = _points(1000, seed=4)

    k = kernel_matrix(params, x, x)

    assert float((k - k.T).abs().max()) <= 1e-12
    assert torch.allclose(torch.diagonal(k), torch.full((1000,), 1.3, dtype=DTYPE), atol=1e-12)


def test_kernel_matrix_is_positive_semidefinite() -> None:
    """Test that Gibbs Gram matrices have no materially negative eigenvalues."""
    x = _points(60, seed=5)

    eigenvalues = torch.linalg.eigvalsh(kernel_matrix(_gibbs(), x, x))

    assert float(eigenvalues.min()) > -1e-9


def test_kernel_eval_on_single_pair() -> None:
    """Test the scalar kernel value between two locations."""
    params = EQParams(variance=2.0, lengthscale_1=0.5, lengthscale_2=0.5)

    value = kernel_eval(params, [0.0, 0.0], [0.5, 0.0])

    assert value == pytest.approx(2.0 * np.exp(-0.5))


def test_lengthscale_field_is_positive() -> None:
    """Test that positive basis weights give strictly positive length scales."""
    l1, l2 = lengthscale_field(_gibbs(), _points(200, seed=6))

    assert l1.shape == (200,)
    assert bool(torch.all(l1 > 0)) and bool(torch.all(l2 > 0))


def test_kernel_gradients_flow_to_hyperparameters() -> None:
    """Test that autograd reaches the variance and length scales."""
    x = _points(10, seed=8)
    variance = torch.tensor(1.0, dtype=DTYPE, requires_grad=True)
    scales = torch.tensor([0.3, 0.3], dtype=DTYPE, requires_grad=True)

    eq_matrix(x, x, variance, scales).sum().backward()

    assert variance.grad is not None and float(variance.grad) > 0
    assert scales.grad is not None and bool(torch.all(scales.grad > 0))


@pytest.mark.parametrize(
    "params, offset, expected",
    [
        (EQParams(variance=2.25), (0.0, 0.0), 2.25),
        (EQParams(variance=1.0, lengthscale_1=1.0, lengthscale_2=1.0), (3.0, 4.0), np.exp(-12.5)),
        (
            RQParams(variance=1.0, lengthscale_1=1.0, lengthscale_2=1.0, alpha=1.0),
            (1.0, 0.0),
            2.0 / 3.0,
        ),
    ],
    ids=["eq-zero-distance", "eq-3-4-5", "rq-alpha-1"],
)
def test_kernel_eval_analytic(
    params: EQParams | RQParams, offset: tuple[float, float], expected: float
) -> None:
    """Test kernel values that can be worked out by hand."""
    assert kernel_eval(params, [0.0, 0.0], list(offset)) == pytest.approx(expected, rel=1e-12)


def test_single_basis_lengthscale() -> None:
    """Test one unit bump: 1 at its centre and exp(-1) at distance sqrt(2)."""
    x = torch.tensor([[0.0, 0.0], [np.sqrt(2.0), 0.0]], dtype=DTYPE)
    theta = torch.ones(1, dtype=DTYPE)
    centers = torch.zeros(1, 2, dtype=DTYPE)

    values = basis_lengthscales(x, theta, centers, basis_scale=1.0)

    assert values.tolist() == pytest.approx([1.0, np.exp(-1.0)], abs=1e-15)


@pytest.mark.parametrize(
    "change, message",
    [
        ({"basis_scale": 0.5}, "basis_scale"),
        ({"centers": basis_grid(3)[0] + 0.01}, "regular"),
        (
            {
                "centers": np.zeros((8, 2)),
                "theta_1": np.full(8, 0.2),
                "theta_2": np.full(8, 0.2),
            },
            "square grid",
        ),
    ],
    ids=["scale-off-spacing", "shifted-centers", "not-square"],
)
def test_gibbs_basis_must_match_the_grid(change: dict[str, object], message: str) -> None:
    """Test that Gibbs parameters only accept the regular basis grid and its spacing."""
    fields = _gibbs().model_dump() | change

    with pytest.raises(InvalidConfig, match=message):
        GibbsParams(**fields)
