"""Tests for acquisition functions and date averaging."""

import numpy as np
import pytest

from placekit.app.errors import EmptyContext, InvalidConfig, ShapeMismatch
from placekit.app.models import (
    AcquisitionField,
    AcquisitionKind,
    EQParams,
    Normalizer,
    SyntheticEnvironment,
)
from placekit.app.services.acquisition import (
    acquisition_average,
    acquisition_eval,
    acquisition_field,
    oracle_eval,
)
from placekit.app.services.environment import search_grid, station_locations
from placekit.app.services.gp import GPModel
from placekit.app.services.neural_process import NPModel
from placekit.app.services.placement import flat_cells, placement_tasks
from placekit.app.services.statistics import kendall_kappa
from tests.conftest import observation_task

NO_CONTEXT = np.zeros((0, 2))
GP_KINDS = [AcquisitionKind.DELTA_VAR, AcquisitionKind.JOINT_MI, AcquisitionKind.MARGINAL_MI]


def _random_points(count: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-0.9, 0.9, size=(count, 2))


def test_context_dist_three_four_five() -> None:
    """Test the distance to the nearest observation."""
    task = observation_task([[0.0, 0.0]], [1.0], [[0.0, 0.0]])

    values = acquisition_eval(
        None, AcquisitionKind.CONTEXT_DIST, task, np.array([[0.3, 0.4]]), np.zeros((1, 2))
    )

    assert values == pytest.approx([0.5])


def test_context_dist_without_observations() -> None:
    """Test that ContextDist is undefined with no observations."""
    task = observation_task(NO_CONTEXT, [], [[0.0, 0.0]])

    with pytest.raises(EmptyContext):
        acquisition_eval(None, AcquisitionKind.CONTEXT_DIST, task, [[0.1, 0.1]], [[0.0, 0.0]])


def test_delta_var_colocated_single_target(eq_model: GPModel) -> None:
    """Test DeltaVar = s^4 / (s^2 + eps) for a query on the only target."""
    site = np.array([[0.2, 0.1]])
    task = observation_task(NO_CONTEXT, [], site)

    values = acquisition_eval(eq_model, AcquisitionKind.DELTA_VAR, task, site, site)

    assert values == pytest.approx([1.0 / 1.01], rel=1e-12)


def test_joint_mi_single_target_is_bivariate_mi(eq_model: GPModel) -> None:
    """Test JointMI = -1/2 log(1 - rho^2) for one target and one query."""
    target = np.array([[0.0, 0.0]])
    query = np.array([[0.2, -0.15]])
    task = observation_task(NO_CONTEXT, [], target)
    k = np.exp(-0.5 * ((0.2 / 0.4) ** 2 + (0.15 / 0.3) ** 2))
    rho_squared = k**2 / (1.0 * 1.01)

    joint = acquisition_eval(eq_model, AcquisitionKind.JOINT_MI, task, query, target)
    marginal = acquisition_eval(eq_model, AcquisitionKind.MARGINAL_MI, task, query, target)

    assert joint == pytest.approx([-0.5 * np.log(1.0 - rho_squared)], rel=1e-9)
    assert marginal == pytest.approx(joint, rel=1e-9)


@pytest.mark.parametrize("kind", GP_KINDS)
def test_gp_scores_ignore_observed_values(eq_model: GPModel, kind: AcquisitionKind) -> None:
    """Test that GP acquisition depends on observation locations only."""
    context = _random_points(4, seed=0)
    search = _random_points(12, seed=1)
    targets = _random_points(6, seed=2)
    low = observation_task(context, np.zeros(4), targets)
    high = observation_task(context, np.arange(4.0) * 10.0, targets)

    first = acquisition_eval(eq_model, kind, low, search, targets)
    second = acquisition_eval(eq_model, kind, high, search, targets)

    assert np.array_equal(first, second)


def test_gp_scores_are_non_negative(eq_model: GPModel) -> None:
    """Test that observing a site never increases GP uncertainty."""
    task = observation_task(_random_points(5, seed=3), np.ones(5), _random_points(8, seed=4))
    search = _random_points(20, seed=5)

    for kind in GP_KINDS:
        values = acquisition_eval(eq_model, kind, task, search, task.target_locations)
        assert np.all(values >= 0), kind


def test_constant_dropped_joint_mi_preserves_ranking(eq_model: GPModel) -> None:
    """Test that dropping the site-independent log-determinant only shifts the field."""
    targets = _random_points(5, seed=6)
    search = _random_points(15, seed=7)
    task = observation_task(_random_points(3, seed=8), np.zeros(3), targets)

    full = acquisition_eval(eq_model, AcquisitionKind.JOINT_MI, task, search, targets)
    dropped = acquisition_eval(
        eq_model, AcquisitionKind.JOINT_MI, task, search, targets, constant_dropped=True
    )

    shift = dropped - full
    assert np.allclose(shift, shift[0], atol=1e-8)
    assert np.array_equal(np.argsort(full), np.argsort(dropped))
    assert kendall_kappa(full, dropped) == 1.0


def test_gp_field_collapses_across_dates(eq_model: GPModel) -> None:
    """Test that dates sharing one station network give the single-date field."""
    context = _random_points(4, seed=9)
    search = _random_points(10, seed=10)
    targets = _random_points(5, seed=11)
    tasks = [
        observation_task(context, np.full(4, float(date)), targets, date_index=date)
        for date in range(3)
    ]

    averaged = acquisition_field(eq_model, AcquisitionKind.JOINT_MI, tasks, search, targets)
    single = acquisition_eval(eq_model, AcquisitionKind.JOINT_MI, tasks[0], search, targets)

    assert np.allclose(averaged.values, single, atol=1e-12)
    assert averaged.dates_used == [0, 1, 2]


def test_random_is_deterministic_per_seed_and_date() -> None:
    """Test the Random kind's reproducibility and dependence on the date."""
    search = _random_points(8, seed=12)
    day0 = observation_task(NO_CONTEXT, [], search, date_index=0)
    day1 = observation_task(NO_CONTEXT, [], search, date_index=1)

    first = acquisition_eval(None, AcquisitionKind.RANDOM, day0, search, search, seed=4)
    again = acquisition_eval(None, AcquisitionKind.RANDOM, day0, search, search, seed=4)
    other = acquisition_eval(None, AcquisitionKind.RANDOM, day1, search, search, seed=4)

    assert np.array_equal(first, again)
    assert not np.array_equal(first, other)


def test_oracle_kind_is_rejected_by_acquisition_eval(eq_model: GPModel) -> None:
    """Test that oracle kinds must go through oracle_eval."""
    task = observation_task(NO_CONTEXT, [], [[0.0, 0.0]])

    with pytest.raises(InvalidConfig):
        acquisition_eval(eq_model, AcquisitionKind.ORACLE_RMSE, task, [[0.1, 0.1]], [[0.0, 0.0]])


def test_model_based_kind_needs_a_model() -> None:
    """Test that DeltaVar without a model is a configuration error."""
    task = observation_task(NO_CONTEXT, [], [[0.0, 0.0]])

    with pytest.raises(InvalidConfig):
        acquisition_eval(None, AcquisitionKind.DELTA_VAR, task, [[0.1, 0.1]], [[0.0, 0.0]])


def test_empty_search_grid(eq_model: GPModel) -> None:
    """Test that an empty search grid is a shape error."""
    task = observation_task(NO_CONTEXT, [], [[0.0, 0.0]])

    with pytest.raises(ShapeMismatch):
        acquisition_eval(eq_model, AcquisitionKind.DELTA_VAR, task, NO_CONTEXT, [[0.0, 0.0]])


def test_neural_process_scores(tiny_np: NPModel, small_env: SyntheticEnvironment) -> None:
    """Test the re-prediction path on an untrained neural process."""
    search, _ = search_grid(small_env, stride=2)
    targets = small_env.locations()[::5]
    tasks = placement_tasks(
        small_env, [0], station_locations(small_env, 3, seed=0), targets, Normalizer(), seed=1
    )

    full = acquisition_eval(tiny_np, AcquisitionKind.JOINT_MI, tasks[0], search, targets)
    dropped = acquisition_eval(
        tiny_np, AcquisitionKind.JOINT_MI, tasks[0], search, targets, constant_dropped=True
    )
    delta = acquisition_eval(tiny_np, AcquisitionKind.DELTA_VAR, tasks[0], search, targets)

    assert full.shape == delta.shape == (search.shape[0],)
    assert np.all(np.isfinite(full)) and np.all(np.isfinite(delta))
    shift = dropped - full
    assert np.allclose(shift, shift[0], atol=1e-8)


def test_average_of_opposite_fields_is_zero() -> None:
    """Test that f and -f average to zero."""
    search = _random_points(5, seed=13)
    values = np.random.default_rng(14).normal(size=5)
    fields = [
        AcquisitionField(
            search_locations=search, values=sign * values, kind="DeltaVar", dates_used=[date]
        )
        for date, sign in enumerate((1.0, -1.0))
    ]

    averaged = acquisition_average(fields)

    assert np.allclose(averaged.values, 0.0, atol=1e-15)
    assert averaged.dates_used == [0, 1]


def test_average_of_one_field_is_identity() -> None:
    """Test that J = 1 returns the field unchanged."""
    field = AcquisitionField(
        search_locations=_random_points(4, seed=15), values=[1.0, 2.0, 3.0, 4.0], kind="JointMI"
    )

    assert np.array_equal(acquisition_average([field]).values, field.values)


def test_average_rejects_mixed_kinds() -> None:
    """Test that fields of different kinds cannot be averaged."""
    search = _random_points(3, seed=16)
    fields = [
        AcquisitionField(search_locations=search, values=np.zeros(3), kind=kind)
        for kind in ("DeltaVar", "JointMI")
    ]

    with pytest.raises(ShapeMismatch):
        acquisition_average(fields)


def test_oracle_rmse_is_reported_in_target_units(small_env: SyntheticEnvironment) -> None:
    """Test that the RMSE oracle scales with the normalizer's std."""
    params = EQParams(variance=1.0, noise_var=0.01, lengthscale_1=0.4, lengthscale_2=0.4)
    unit = GPModel("eq", params, Normalizer(mean=0.0, std=1.0))
    wide = GPModel("eq", params, Normalizer(mean=0.0, std=3.0))
    search, _ = search_grid(small_env, stride=2)
    targets = small_env.locations()[::3]
    task = placement_tasks(
        small_env, [2], station_locations(small_env, 3, seed=0), targets, Normalizer(), seed=2
    )[0]

    base = oracle_eval(unit, AcquisitionKind.ORACLE_RMSE, small_env, task, search, targets)
    scaled = oracle_eval(wide, AcquisitionKind.ORACLE_RMSE, small_env, task, search, targets)

    assert np.allclose(scaled, 3.0 * base)


def test_oracle_duplicate_observation_carries_no_information(
    small_env: SyntheticEnvironment,
) -> None:
    """Test that revealing an already observed site leaves the metric unchanged."""
    params = EQParams(variance=1.0, noise_var=1e-6, lengthscale_1=0.4, lengthscale_2=0.4)
    model = GPModel("eq", params)
    stations = station_locations(small_env, 4, seed=3)
    free = np.setdiff1d(np.arange(small_env.grid_size**2), flat_cells(small_env, stations))
    targets = small_env.locations()[free[::4]]
    task = placement_tasks(small_env, [1], stations, targets, Normalizer(), seed=4)[0]

    values = oracle_eval(
        model, AcquisitionKind.ORACLE_MARGINAL_NLL, small_env, task, stations[:1], targets
    )

    assert values.shape == (1,)
    assert abs(values[0]) < 1e-3


def test_neural_process_scores_depend_on_observed_values(
    tiny_np: NPModel, small_env: SyntheticEnvironment
) -> None:
    """Test that replacing the observed values changes neural-process acquisition."""
    context = station_locations(small_env, 4, seed=0)
    search, _ = search_grid(small_env, stride=2)
    targets = small_env.locations()[::5]
    calm = observation_task(context, np.zeros(4), targets, env=small_env)
    stormy = observation_task(context, [3.0, -2.0, 1.5, 4.0], targets, env=small_env)

    first = acquisition_eval(tiny_np, AcquisitionKind.JOINT_MI, calm, search, targets)
    second = acquisition_eval(tiny_np, AcquisitionKind.JOINT_MI, stormy, search, targets)

    assert not np.allclose(first, second, rtol=0.0, atol=1e-9)
