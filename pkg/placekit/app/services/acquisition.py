"""Acquisition functions over a search grid.

Model-based kinds score a candidate site by how much observing it would
shrink the model's uncertainty about a fixed target set. The unknown value
at the candidate is imputed with the model's own predictive mean, so no
ground truth is needed. Oracle kinds instead reveal the true value and
measure the change in a predictive metric.

GP baselines use closed forms from the joint latent covariance of targets
and candidates; any other predictor is re-run once per candidate.
"""

import logging
from collections.abc import Callable

import numpy as np
import torch
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist

from placekit.app.errors import EmptyContext, InvalidConfig, ShapeMismatch
from placekit.app.models.environment import SyntheticEnvironment
from placekit.app.models.gaussian import DenseGaussian, GaussianPredictive
from placekit.app.models.placement import AcquisitionField, AcquisitionKind
from placekit.app.models.task import Task
from placekit.app.prometheus import track_acquisition
from placekit.app.services.core_math import cholesky_with_jitter, dense_logdet, gaussian_logdet
from placekit.app.services.gp import GPModel
from placekit.app.services.metrics import joint_nll_normalized, marginal_nll, rmse
from placekit.app.services.prediction import Predictor
from placekit.app.services.tasks import truth_at
from placekit.app.telemetry import trace_method

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-12
BATCH_SIZE = 32


def _check_inputs(search: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    search = np.asarray(search, dtype=np.float64).reshape(-1, 2)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 2)
    if search.shape[0] == 0:
        raise ShapeMismatch("search grid is empty")
    if targets.shape[0] == 0:
        raise ShapeMismatch("target set is empty")
    return search, targets


def impute_mean(model: Predictor, task: Task, locations: np.ndarray) -> np.ndarray:
    """Predictive mean at ``locations`` given the task's contexts."""
    pred = model.predict(task.with_targets(locations))
    return pred.mean.detach().numpy().copy()


def _predict_many(model: Predictor, tasks: list[Task]) -> list[GaussianPredictive]:
    batched = getattr(model, "predict_batch", None)
    if batched is None:
        return [model.predict(task) for task in tasks]
    predictions: list[GaussianPredictive] = []
    for start in range(0, len(tasks), BATCH_SIZE):
        predictions.extend(batched(tasks[start : start + BATCH_SIZE]))
    return predictions


def _context_dist(task: Task, search: np.ndarray) -> np.ndarray:
    observations = task.observations
    if observations.size == 0:
        raise EmptyContext(f"ContextDist needs observations on date {task.date_index}")
    return cdist(search, observations.locations).min(axis=1)


def _random(task: Task, search: np.ndarray, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, task.date_index])
    return rng.random(search.shape[0])


def _gp_scores(
    model: GPModel,
    kind: AcquisitionKind,
    task: Task,
    search: np.ndarray,
    targets: np.ndarray,
    constant_dropped: bool,
) -> np.ndarray:
    """Closed-form scores from rank-one conditioning of the latent posterior.

    Observing site ``s`` with noise ``eps`` updates the target covariance to
    ``K - c c^T / (v + eps)`` where ``c`` is the target/site covariance and
    ``v`` the site variance. The update does not depend on the imputed value.
    """
    n_t = targets.shape[0]
    with torch.no_grad():
        joint = model.predict(task.with_targets(np.vstack([targets, search])), latent=True)
        cov = joint.cov
        k_tt = cov[:n_t, :n_t]
        cross = cov[:n_t, n_t:]
        query_var = torch.diagonal(cov)[n_t:] + model.noise_var

        if kind == AcquisitionKind.DELTA_VAR:
            return ((cross**2).mean(dim=0) / query_var).numpy()

        if kind == AcquisitionKind.MARGINAL_MI:
            before = torch.diagonal(k_tt).clamp_min(VARIANCE_FLOOR).unsqueeze(1)
            after = (before - cross**2 / query_var).clamp_min(VARIANCE_FLOOR)
            return (0.5 * (torch.log(before) - torch.log(after)).sum(dim=0)).numpy()

        factor, jitter = cholesky_with_jitter(k_tt)
        if constant_dropped:
            return np.array(
                [
                    -0.5
                    * float(
                        dense_logdet(
                            k_tt - torch.outer(cross[:, s], cross[:, s]) / query_var[s], jitter
                        )
                    )
                    for s in range(search.shape[0])
                ]
            )
        # det(A - c c^T / q) = det(A) (1 - c^T A^-1 c / q)
        whitened = torch.linalg.solve_triangular(factor, cross, upper=False)
        explained = (whitened**2).sum(dim=0) / query_var
        remaining = (1.0 - explained).clamp_min(VARIANCE_FLOOR)
        return (-0.5 * torch.log(remaining)).numpy()


def _logdet_with_jitter(pred: GaussianPredictive) -> tuple[float, float]:
    if isinstance(pred, DenseGaussian):
        _, jitter = cholesky_with_jitter(pred.cov)
        return float(dense_logdet(pred.cov, jitter)), jitter
    return float(gaussian_logdet(pred)), 0.0


def _refit_scores(
    model: Predictor,
    kind: AcquisitionKind,
    task: Task,
    search: np.ndarray,
    targets: np.ndarray,
    constant_dropped: bool,
) -> np.ndarray:
    """Scores by re-predicting once per candidate with the imputed value appended."""
    base = task.with_targets(targets)
    imputed = impute_mean(model, task, search)
    before = model.predict(base)
    after = _predict_many(
        model,
        [base.with_observations(search[s : s + 1], imputed[s : s + 1]) for s in range(len(search))],
    )
    with torch.no_grad():
        if kind == AcquisitionKind.DELTA_VAR:
            baseline = float(before.marginal_variances().mean())
            return np.array([baseline - float(p.marginal_variances().mean()) for p in after])

        if kind == AcquisitionKind.MARGINAL_MI:
            log_before = torch.log(before.marginal_variances().clamp_min(VARIANCE_FLOOR))
            return np.array(
                [
                    float(
                        0.5
                        * (
                            log_before
                            - torch.log(p.marginal_variances().clamp_min(VARIANCE_FLOOR))
                        ).sum()
                    )
                    for p in after
                ]
            )

        logdet_before, jitter = _logdet_with_jitter(before)
        logdets_after = np.array([float(gaussian_logdet(p, jitter)) for p in after])
        if constant_dropped:
            return -0.5 * logdets_after
        return 0.5 * (logdet_before - logdets_after)


def acquisition_eval(
    model: Predictor | None,
    kind: AcquisitionKind,
    task: Task,
    search_locations: np.ndarray,
    target_locations: np.ndarray,
    *,
    seed: int = 0,
    constant_dropped: bool = False,
) -> np.ndarray:
    """Acquisition values of one date's task at every search site.

    Args:
        model: Predictor for model-based kinds; ignored by ContextDist and Random.
        kind: Non-oracle acquisition kind.
        task: The date's contexts; its own targets are ignored.
        search_locations: Candidate sites (S, 2).
        target_locations: Locations whose uncertainty is scored (T, 2).
        seed: Seed of the Random kind, combined with the task date.
        constant_dropped: For JointMI, return ``-1/2 log det`` of the
            post-observation covariance, which ranks sites identically.

    Returns:
        Array of shape (S,).

    Raises:
        InvalidConfig: For oracle kinds or a missing model.
        EmptyContext: For ContextDist without observations.
    """
    search, targets = _check_inputs(search_locations, target_locations)
    if kind.is_oracle:
        raise InvalidConfig(f"{kind} needs ground truth; use oracle_eval")
    if kind == AcquisitionKind.CONTEXT_DIST:
        return _context_dist(task, search)
    if kind == AcquisitionKind.RANDOM:
        return _random(task, search, seed)
    if model is None:
        raise InvalidConfig(f"{kind} needs a model")
    if isinstance(model, GPModel):
        return _gp_scores(model, kind, task, search, targets, constant_dropped)
    return _refit_scores(model, kind, task, search, targets, constant_dropped)


_ORACLE_METRICS: dict[AcquisitionKind, Callable[[GaussianPredictive, np.ndarray], float]] = {
    AcquisitionKind.ORACLE_JOINT_NLL: joint_nll_normalized,
    AcquisitionKind.ORACLE_MARGINAL_NLL: marginal_nll,
    AcquisitionKind.ORACLE_RMSE: rmse,
}


def oracle_eval(
    model: Predictor,
    kind: AcquisitionKind,
    env: SyntheticEnvironment,
    task: Task,
    search_locations: np.ndarray,
    target_locations: np.ndarray,
) -> np.ndarray:
    """Metric improvement from revealing the true value at each search site.

    Positive values mean the metric dropped once the site was observed.
    RMSE is reported in target units; NLL differences are unit-free.
    """
    if not kind.is_oracle:
        raise InvalidConfig(f"{kind} is not an oracle kind")
    search, targets = _check_inputs(search_locations, target_locations)
    metric = _ORACLE_METRICS[kind]
    scale = model.normalizer.std if kind == AcquisitionKind.ORACLE_RMSE else 1.0

    y_targets = truth_at(env, task, targets)
    y_search = truth_at(env, task, search)
    base = task.with_targets(targets, y_targets)
    before = metric(model.predict(base), y_targets)
    after = _predict_many(
        model,
        [
            base.with_observations(search[s : s + 1], y_search[s : s + 1])
            for s in range(len(search))
        ],
    )
    return scale * np.array([before - metric(p, y_targets) for p in after])


def acquisition_average(fields: list[AcquisitionField]) -> AcquisitionField:
    """Mean of per-date fields over a shared search grid."""
    if not fields:
        raise ShapeMismatch("no acquisition fields to average")
    first = fields[0]
    for other in fields[1:]:
        if other.kind != first.kind or not np.array_equal(
            other.search_locations, first.search_locations
        ):
            raise ShapeMismatch("acquisition fields disagree on kind or search grid")
    dates = [date for f in fields for date in f.dates_used]
    return AcquisitionField(
        search_locations=first.search_locations,
        values=np.mean([f.values for f in fields], axis=0),
        kind=first.kind,
        dates_used=dates,
    )


@trace_method("acquisition_field")
def acquisition_field(
    model: Predictor | None,
    kind: AcquisitionKind,
    tasks: list[Task],
    search_locations: np.ndarray,
    target_locations: np.ndarray,
    *,
    env: SyntheticEnvironment | None = None,
    seed: int = 0,
    threads: int = 1,
    constant_dropped: bool = False,
) -> AcquisitionField:
    """Date-averaged acquisition field; dates are scored in parallel threads.

    Oracle kinds need ``env`` to look up ground-truth values.
    """
    if not tasks:
        raise InvalidConfig("acquisition needs at least one date")

    def score(task: Task) -> np.ndarray:
        if kind.is_oracle:
            if env is None or model is None:
                raise InvalidConfig(f"{kind} needs a model and the environment")
            return oracle_eval(model, kind, env, task, search_locations, target_locations)
        return acquisition_eval(
            model,
            kind,
            task,
            search_locations,
            target_locations,
            seed=seed,
            constant_dropped=constant_dropped,
        )

    per_date = Parallel(n_jobs=threads, prefer="threads")(delayed(score)(task) for task in tasks)
    track_acquisition(str(kind), len(tasks))
    fields = [
        AcquisitionField(
            search_locations=search_locations,
            values=values,
            kind=kind,
            dates_used=[task.date_index],
        )
        for task, values in zip(tasks, per_date)
    ]
    averaged = acquisition_average(fields)
    logger.debug(
        "%s field over %d dates: max %.4g at site %d",
        kind,
        len(tasks),
        float(averaged.values.max()),
        int(np.argmax(averaged.values)),
    )
    return averaged
