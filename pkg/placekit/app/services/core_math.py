"""Dense and low-rank multivariate Gaussian algebra.

Every routine works in torch float64 and is differentiable, so the GP and
neural-process objectives can be optimised by autograd through them.
"""

import logging
import math

import numpy as np
import torch

from placekit.app.errors import NotPositiveDefinite, ShapeMismatch
from placekit.app.models.gaussian import DenseGaussian, GaussianPredictive, LowRankDiagGaussian

logger = logging.getLogger(__name__)

DTYPE = torch.float64
LOG_2PI = math.log(2.0 * math.pi)

INITIAL_JITTER = 1e-8
JITTER_GROWTH = 10.0
MAX_ESCALATIONS = 4
SYMMETRY_TOLERANCE = 1e-10


def as_tensor(value: object) -> torch.Tensor:
    """Convert arrays, lists and tensors to a float64 tensor."""
    if isinstance(value, torch.Tensor):
        return value.to(DTYPE)
    return torch.as_tensor(np.asarray(value, dtype=np.float64), dtype=DTYPE)


def _check_square_symmetric(a: torch.Tensor) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got {tuple(a.shape)}")
    if a.shape[0] == 0:
        return
    detached = a.detach()
    scale = float(detached.abs().max())
    if float((detached - detached.T).abs().max()) > SYMMETRY_TOLERANCE * max(scale, 1e-300):
        raise ShapeMismatch("matrix is not symmetric")


def cholesky_with_jitter(a: torch.Tensor, jitter: float = 0.0) -> tuple[torch.Tensor, float]:
    """Cholesky factor of ``a + jitter * I``, escalating jitter on failure.

    The first attempt uses ``jitter`` as given. On failure jitter restarts at
    ``1e-8 * mean(diag(a))`` (or ten times the given jitter, if larger) and
    grows tenfold, at most four times.

    Args:
        a: Symmetric (N, N) matrix.
        jitter: Non-negative diagonal term for the first attempt.

    Returns:
        The lower-triangular factor and the jitter that was finally added.

    Raises:
        NotPositiveDefinite: If the factorisation fails at maximum jitter.
        ShapeMismatch: If ``a`` is not square and symmetric.
    """
    a = as_tensor(a)
    _check_square_symmetric(a)
    n = a.shape[0]
    if n == 0:
        return a.new_zeros((0, 0)), jitter
    eye = torch.eye(n, dtype=DTYPE)

    factor, info = torch.linalg.cholesky_ex(a + jitter * eye)
    if int(info) == 0:
        return factor, jitter

    mean_diag = float(torch.diagonal(a.detach()).mean())
    current = max(INITIAL_JITTER * max(mean_diag, 1.0e-300), jitter * JITTER_GROWTH)
    for _ in range(MAX_ESCALATIONS):
        factor, info = torch.linalg.cholesky_ex(a + current * eye)
        if int(info) == 0:
            logger.warning("Cholesky needed jitter %.3g on a %dx%d matrix", current, n, n)
            return factor, current
        current *= JITTER_GROWTH
    raise NotPositiveDefinite(
        f"Cholesky failed on a {n}x{n} matrix with jitter up to {current / JITTER_GROWTH:.3g}"
    )


def cholesky_psd(a: torch.Tensor, jitter: float = 0.0) -> torch.Tensor:
    """Lower Cholesky factor of ``a + jitter * I`` with jitter escalation."""
    factor, _ = cholesky_with_jitter(a, jitter)
    return factor


def dense_logdet(cov: torch.Tensor, jitter: float = 0.0) -> torch.Tensor:
    """log det of a symmetric positive-definite matrix."""
    factor = cholesky_psd(cov, jitter)
    return 2.0 * torch.log(torch.diagonal(factor)).sum()


def dense_logpdf(
    g: DenseGaussian, y: object, noise_var: float | torch.Tensor = 0.0
) -> torch.Tensor:
    """log N(y; mean, cov + noise_var * I) as a scalar tensor."""
    y = as_tensor(y).reshape(-1)
    if y.shape[0] != g.size:
        raise ShapeMismatch(f"y has {y.shape[0]} entries, Gaussian has {g.size}")
    if g.size == 0:
        return torch.zeros((), dtype=DTYPE)
    factor = cholesky_psd(g.cov + noise_var * torch.eye(g.size, dtype=DTYPE))
    residual = (y - g.mean).unsqueeze(1)
    whitened = torch.linalg.solve_triangular(factor, residual, upper=False)
    logdet = 2.0 * torch.log(torch.diagonal(factor)).sum()
    return -0.5 * ((whitened**2).sum() + logdet + g.size * LOG_2PI)


def _capacitance_factor(factor: torch.Tensor, diag: torch.Tensor) -> torch.Tensor:
    """Cholesky factor of ``I_R + F^T D^-1 F``."""
    rank = factor.shape[1]
    capacitance = torch.eye(rank, dtype=DTYPE) + factor.T @ (factor / diag.unsqueeze(1))
    capacitance = 0.5 * (capacitance + capacitance.T)
    return cholesky_psd(capacitance)


def lowrank_logdet(factor: object, diag: object) -> torch.Tensor:
    """log det(F F^T + diag(d)) by the matrix determinant lemma, O(N R^2)."""
    factor = as_tensor(factor)
    diag = as_tensor(diag).reshape(-1)
    if factor.ndim != 2 or factor.shape[0] != diag.shape[0]:
        raise ShapeMismatch(f"factor {tuple(factor.shape)} and diag {tuple(diag.shape)} disagree")
    if not bool(torch.all(diag.detach() > 0)):
        raise NotPositiveDefinite("diagonal term must be strictly positive")
    cap = _capacitance_factor(factor, diag)
    return torch.log(diag).sum() + 2.0 * torch.log(torch.diagonal(cap)).sum()


def lowrank_logpdf(g: LowRankDiagGaussian, y: object) -> torch.Tensor:
    """log N(y; mean, F F^T + diag(d)) via the Woodbury identity, O(N R^2)."""
    y = as_tensor(y).reshape(-1)
    if y.shape[0] != g.size:
        raise ShapeMismatch(f"y has {y.shape[0]} entries, Gaussian has {g.size}")
    if g.size == 0:
        return torch.zeros((), dtype=DTYPE)
    residual = y - g.mean
    cap = _capacitance_factor(g.factor, g.diag)
    projected = g.factor.T @ (residual / g.diag)
    whitened = torch.linalg.solve_triangular(cap, projected.unsqueeze(1), upper=False)
    quad = (residual**2 / g.diag).sum() - (whitened**2).sum()
    logdet = torch.log(g.diag).sum() + 2.0 * torch.log(torch.diagonal(cap)).sum()
    return -0.5 * (quad + logdet + g.size * LOG_2PI)


def gaussian_logpdf(g: GaussianPredictive, y: object) -> torch.Tensor:
    """Joint log-density under either predictive structure."""
    if isinstance(g, LowRankDiagGaussian):
        return lowrank_logpdf(g, y)
    return dense_logpdf(g, y)


def gaussian_logdet(g: GaussianPredictive, jitter: float = 0.0) -> torch.Tensor:
    """log det of the predictive covariance."""
    if isinstance(g, LowRankDiagGaussian):
        return lowrank_logdet(g.factor, g.diag)
    return dense_logdet(g.cov, jitter)


def sample_mvn(
    g: GaussianPredictive,
    seed: int,
    count: int,
    *,
    scale_tril: torch.Tensor | None = None,
) -> torch.Tensor:
    """Draw ``count`` samples, shape (count, N), deterministically from ``seed``.

    The low-rank path draws ``mean + eps_R F^T + sqrt(d) * eps_N`` without
    materialising the covariance. A precomputed Cholesky factor of a dense
    covariance may be passed as ``scale_tril``.
    """
    generator = torch.Generator().manual_seed(int(seed))
    n = g.size
    with torch.no_grad():
        mean = g.mean.detach().unsqueeze(0)
        if isinstance(g, LowRankDiagGaussian):
            eps_r = torch.randn(count, g.rank, generator=generator, dtype=DTYPE)
            eps_n = torch.randn(count, n, generator=generator, dtype=DTYPE)
            return mean + eps_r @ g.factor.detach().T + torch.sqrt(g.diag.detach()) * eps_n
        cov = g.cov.detach()
        if n == 0 or not bool(torch.any(cov != 0)):
            return mean.expand(count, n).clone()
        factor = cholesky_psd(cov) if scale_tril is None else scale_tril.detach().to(DTYPE)
        eps = torch.randn(count, n, generator=generator, dtype=DTYPE)
        return mean + eps @ factor.T
