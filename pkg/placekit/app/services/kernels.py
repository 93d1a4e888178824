"""Covariance kernels shared by the GP baselines and the synthetic environment.

Locations are (N, 2) float64 tensors. Hyperparameters may be tensors that
require grad.
"""

import torch

from placekit.app.models.kernel_params import EQParams, GibbsParams, KernelParams, RQParams
from placekit.app.services.core_math import as_tensor


def _scaled_sqdist(x: torch.Tensor, z: torch.Tensor, lengthscales: torch.Tensor) -> torch.Tensor:
    diff = (x.unsqueeze(1) - z.unsqueeze(0)) / lengthscales
    return diff.pow(2).sum(dim=-1)


def eq_matrix(
    x: torch.Tensor, z: torch.Tensor, variance: torch.Tensor, lengthscales: torch.Tensor
) -> torch.Tensor:
    """Anisotropic EQ kernel ``s2 * exp(-0.5 * sum_i (dx_i / l_i)^2)``."""
    return variance * torch.exp(-0.5 * _scaled_sqdist(x, z, lengthscales))


def rq_matrix(
    x: torch.Tensor,
    z: torch.Tensor,
    variance: torch.Tensor,
    lengthscales: torch.Tensor,
    alpha: torch.Tensor,
) -> torch.Tensor:
    """Anisotropic RQ kernel ``s2 * (1 + r^2 / (2 alpha))^-alpha``."""
    return variance * torch.pow(1.0 + _scaled_sqdist(x, z, lengthscales) / (2.0 * alpha), -alpha)


def basis_lengthscales(
    x: torch.Tensor, theta: torch.Tensor, centers: torch.Tensor, basis_scale: float
) -> torch.Tensor:
    """Length-scale field ``sum_m theta_m exp(-|x - c_m|^2 / (2 lambda^2))`` at each x."""
    sqdist = (x.unsqueeze(1) - centers.unsqueeze(0)).pow(2).sum(dim=-1)
    return torch.exp(-sqdist / (2.0 * basis_scale**2)) @ theta


def gibbs_matrix(
    x: torch.Tensor,
    z: torch.Tensor,
    variance: torch.Tensor,
    lengthscales_x: torch.Tensor,
    lengthscales_z: torch.Tensor,
) -> torch.Tensor:
    """Gibbs kernel from per-point length scales, each of shape (N, 2)."""
    lx = lengthscales_x.unsqueeze(1)
    lz = lengthscales_z.unsqueeze(0)
    sum_sq = lx.pow(2) + lz.pow(2)
    prefactor = torch.sqrt(2.0 * lx * lz / sum_sq).prod(dim=-1)
    diff = x.unsqueeze(1) - z.unsqueeze(0)
    return variance * prefactor * torch.exp(-(diff.pow(2) / sum_sq).sum(dim=-1))


def lengthscale_field(params: GibbsParams, locations: object) -> tuple[torch.Tensor, torch.Tensor]:
    """Evaluate the two Gibbs length-scale fields at ``locations``."""
    x = as_tensor(locations).reshape(-1, 2)
    centers = as_tensor(params.centers)
    l1 = basis_lengthscales(x, as_tensor(params.theta_1), centers, params.basis_scale)
    l2 = basis_lengthscales(x, as_tensor(params.theta_2), centers, params.basis_scale)
    return l1, l2


def kernel_matrix(params: KernelParams, x: object, z: object) -> torch.Tensor:
    """Prior covariance between two location sets for fixed hyperparameters."""
    x = as_tensor(x).reshape(-1, 2)
    z = as_tensor(z).reshape(-1, 2)
    variance = torch.tensor(params.variance, dtype=x.dtype)
    if isinstance(params, EQParams):
        scales = as_tensor([params.lengthscale_1, params.lengthscale_2])
        return eq_matrix(x, z, variance, scales)
    if isinstance(params, RQParams):
        scales = as_tensor([params.lengthscale_1, params.lengthscale_2])
        return rq_matrix(x, z, variance, scales, torch.tensor(params.alpha, dtype=x.dtype))
    lx = torch.stack(lengthscale_field(params, x), dim=1)
    lz = torch.stack(lengthscale_field(params, z), dim=1)
    return gibbs_matrix(x, z, variance, lx, lz)


def kernel_eval(params: KernelParams, x: object, z: object) -> float:
    """Kernel value between two single locations."""
    return float(kernel_matrix(params, x, z)[0, 0])
