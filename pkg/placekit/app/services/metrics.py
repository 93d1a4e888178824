"""Predictive performance metrics and calibration diagnostics."""

import math

import numpy as np
import torch
from scipy import stats

from placekit.app.errors import ShapeMismatch
from placekit.app.models.gaussian import GaussianPredictive
from placekit.app.models.metric_report import MetricReport
from placekit.app.models.task import Normalizer, Task
from placekit.app.services.core_math import as_tensor, gaussian_logpdf
from placekit.app.services.prediction import Predictor

LOG_2PI = math.log(2.0 * math.pi)


def _residuals(pred: GaussianPredictive, y: object) -> tuple[np.ndarray, np.ndarray]:
    y_arr = np.asarray(y, dtype=np.float64).reshape(-1)
    if y_arr.shape[0] != pred.size:
        raise ShapeMismatch(f"{y_arr.shape[0]} values for a {pred.size}-dimensional predictive")
    mean = pred.mean.detach().numpy()
    variances = pred.marginal_variances().detach().numpy()
    return y_arr - mean, variances


def rmse(pred: GaussianPredictive, y: object) -> float:
    """Root-mean-square error of the predictive mean."""
    residual, _ = _residuals(pred, y)
    return float(np.sqrt(np.mean(residual**2)))


def marginal_nll(pred: GaussianPredictive, y: object) -> float:
    """Mean over targets of -log N(y_i; mu_i, k_ii)."""
    residual, variances = _residuals(pred, y)
    return float(np.mean(0.5 * (LOG_2PI + np.log(variances) + residual**2 / variances)))


def joint_nll_normalized(pred: GaussianPredictive, y: object) -> float:
    """Joint negative log-likelihood divided by the number of targets."""
    _residuals(pred, y)
    with torch.no_grad():
        return float(-gaussian_logpdf(pred, as_tensor(y)) / pred.size)


def pit_values(pred: GaussianPredictive, y: object) -> np.ndarray:
    """Marginal CDF of each target value under the predictive."""
    residual, variances = _residuals(pred, y)
    return stats.norm.cdf(residual / np.sqrt(variances))


def sharpness(pred: GaussianPredictive) -> float:
    """Mean marginal predictive standard deviation."""
    return float(np.mean(np.sqrt(pred.marginal_variances().detach().numpy())))


def pit_histogram(values: np.ndarray, bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Counts and bin edges of PIT values over [0, 1]."""
    counts, edges = np.histogram(np.asarray(values, dtype=np.float64), bins=bins, range=(0.0, 1.0))
    return counts, edges


def _stderr(values: list[float]) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def report(
    predictions: list[GaussianPredictive],
    targets: list[np.ndarray],
    normalizer: Normalizer | None = None,
) -> MetricReport:
    """Aggregate metrics over tasks in target-variable units.

    Per-task metrics are computed on the normalised scale and mapped back:
    RMSE scales by ``std``, NLLs shift by ``log(std)``, variances scale by
    ``std**2``. The task aggregate is the unweighted mean with standard error.
    """
    if not predictions or len(predictions) != len(targets):
        raise ShapeMismatch("need one target vector per prediction")
    normalizer = normalizer or Normalizer()
    log_std = math.log(normalizer.std)
    rmses, marginals, joints, variances = [], [], [], []
    for pred, y in zip(predictions, targets):
        rmses.append(rmse(pred, y) * normalizer.std)
        marginals.append(marginal_nll(pred, y) + log_std)
        joints.append(joint_nll_normalized(pred, y) + log_std)
        variances.append(
            float(pred.marginal_variances().detach().mean()) * normalizer.std**2
        )
    return MetricReport(
        rmse=float(np.mean(rmses)),
        marginal_nll=float(np.mean(marginals)),
        joint_nll_normalized=float(np.mean(joints)),
        mean_marginal_variance=float(np.mean(variances)),
        n_targets=int(sum(p.size for p in predictions)),
        n_tasks=len(predictions),
        rmse_stderr=_stderr(rmses),
        marginal_nll_stderr=_stderr(marginals),
        joint_nll_normalized_stderr=_stderr(joints),
        mean_marginal_variance_stderr=_stderr(variances),
    )


def evaluate_tasks(model: Predictor, tasks: list[Task]) -> MetricReport:
    """Score a model on tasks carrying target values."""
    predictions = [model.predict(task) for task in tasks]
    targets = []
    for task in tasks:
        if task.target_values is None:
            raise ShapeMismatch("evaluation tasks need target values")
        targets.append(task.target_values)
    return report(predictions, targets, model.normalizer)


def mean_report(reports: list[MetricReport]) -> MetricReport:
    """Average of replicate reports; standard errors are taken across replicates."""
    if not reports:
        raise ShapeMismatch("no reports to average")
    fields = ("rmse", "marginal_nll", "joint_nll_normalized", "mean_marginal_variance")
    values = {name: [getattr(r, name) for r in reports] for name in fields}
    return MetricReport(
        **{name: float(np.mean(series)) for name, series in values.items()},
        **{f"{name}_stderr": _stderr(series) for name, series in values.items()},
        n_targets=reports[0].n_targets,
        n_tasks=reports[0].n_tasks,
    )
