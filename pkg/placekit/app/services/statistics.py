"""Correlation statistics with bootstrap confidence intervals."""

import logging
from collections.abc import Callable
from typing import Any

import numpy as np
from scipy import stats

from placekit.app.errors import DegenerateInput, ShapeMismatch

logger = logging.getLogger(__name__)

MAX_REDRAWS = 1000
CONFIDENCE_LEVEL = 0.95
CI_PERCENTILES = (2.5, 97.5)


def _pair(a: object, b: object) -> tuple[np.ndarray, np.ndarray]:
    a_arr = np.asarray(a, dtype=np.float64).reshape(-1)
    b_arr = np.asarray(b, dtype=np.float64).reshape(-1)
    if a_arr.shape != b_arr.shape:
        raise ShapeMismatch(f"paired samples differ in length: {a_arr.size} vs {b_arr.size}")
    if a_arr.size < 2:
        raise DegenerateInput("need at least two paired values")
    return a_arr, b_arr


def pearson_r(a: object, b: object) -> float:
    """Pearson correlation coefficient.

    Raises:
        DegenerateInput: If either sample has zero variance.
    """
    a_arr, b_arr = _pair(a, b)
    if np.ptp(a_arr) == 0.0 or np.ptp(b_arr) == 0.0:
        raise DegenerateInput("Pearson r is undefined for a constant sample")
    return float(stats.pearsonr(a_arr, b_arr).statistic)


def kendall_kappa(a: object, b: object) -> float:
    """Kendall rank correlation (tau-a): mean of sign agreements over all pairs.

    Tied pairs count as zero and stay in the denominator, unlike the tau-b
    of ``scipy.stats.kendalltau``, which rescales for ties. The two agree on
    tie-free samples.
    """
    a_arr, b_arr = _pair(a, b)
    upper = np.triu_indices(a_arr.size, k=1)
    sign_a = np.sign(a_arr[:, None] - a_arr[None, :])[upper]
    sign_b = np.sign(b_arr[:, None] - b_arr[None, :])[upper]
    return float(np.mean(sign_a * sign_b))


def _resampled(
    a: np.ndarray,
    b: np.ndarray,
    statistic: Callable[[np.ndarray, np.ndarray], float],
    n_resamples: int,
    rng: np.random.Generator,
) -> Any:
    def defined(x: np.ndarray, y: np.ndarray) -> float:
        try:
            return statistic(x, y)
        except DegenerateInput:
            return np.nan

    return stats.bootstrap(
        (a, b),
        defined,
        paired=True,
        vectorized=False,
        n_resamples=n_resamples,
        confidence_level=CONFIDENCE_LEVEL,
        method="percentile",
        random_state=rng,
    )


def bootstrap_ci(
    a: object,
    b: object,
    statistic: Callable[[np.ndarray, np.ndarray], float],
    n_resamples: int,
    seed: int,
) -> tuple[float, float]:
    """Percentile bootstrap interval (2.5%, 97.5%) of a paired statistic.

    Sites are resampled with replacement by ``scipy.stats.bootstrap``. A
    resample on which the statistic is undefined is redrawn, at most
    ``MAX_REDRAWS`` times overall. The interval is widened if needed to
    contain the full-sample estimate.

    Raises:
        DegenerateInput: If the statistic is undefined on the full sample,
            or too many resamples are degenerate.
    """
    a_arr, b_arr = _pair(a, b)
    if n_resamples < 1:
        raise DegenerateInput("bootstrap needs at least one resample")
    estimate = statistic(a_arr, b_arr)
    rng = np.random.default_rng(seed)

    result = _resampled(a_arr, b_arr, statistic, n_resamples, rng)
    draws = result.bootstrap_distribution[np.isfinite(result.bootstrap_distribution)]
    redraws = n_resamples - draws.size
    while draws.size < n_resamples:
        if redraws > MAX_REDRAWS:
            raise DegenerateInput(f"bootstrap gave up after {MAX_REDRAWS} degenerate resamples")
        missing = n_resamples - draws.size
        extra = _resampled(a_arr, b_arr, statistic, missing, rng).bootstrap_distribution
        kept = extra[np.isfinite(extra)]
        redraws += missing - kept.size
        draws = np.concatenate([draws, kept])

    if redraws:
        logger.debug("bootstrap redrew %d degenerate resamples", redraws)
        low, high = np.percentile(draws, CI_PERCENTILES)
    else:
        low, high = result.confidence_interval
    return float(min(low, estimate)), float(max(high, estimate))
