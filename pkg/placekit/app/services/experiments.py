"""Experiment pipelines behind each command.

Every pipeline takes the validated config, the output root and a thread cap,
writes its artifacts under ``<out>/<command>/`` and returns their paths.
Downstream pipelines reuse the environment and model checkpoints written by
``gen-env``, ``fit-gp`` and ``train-np`` under the same output root.
"""

import logging
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import yaml
from pydantic import ValidationError

from placekit.app.errors import InvalidConfig
from placekit.app.models.environment import SyntheticEnvironment
from placekit.app.models.experiment_config import ExperimentConfig, ModelName
from placekit.app.models.kernel_params import GibbsParams
from placekit.app.models.placement import AcquisitionKind, CorrelationReport
from placekit.app.models.task import Normalizer, Task
from placekit.app.services.acquisition import acquisition_field
from placekit.app.services.checkpoint import (
    load_environment,
    load_model,
    save_environment,
    save_gp,
    save_np,
)
from placekit.app.services.diagnostics import (
    correlation_difference,
    draw_samples,
    lengthscale_maps,
    prior_covariance_map,
)
from placekit.app.services.environment import (
    build_environment,
    date_splits,
    evenly_spaced,
    realize_field,
    search_grid,
    station_locations,
)
from placekit.app.services.gp import GPModel, fit_gp
from placekit.app.services.metrics import evaluate_tasks, pit_histogram, pit_values, sharpness
from placekit.app.services.neural_process import NPModel, np_train
from placekit.app.services.pareto import pareto_ranks
from placekit.app.services.placement import (
    evaluate_plan,
    greedy_place,
    oracle_acquisition,
    placement_tasks,
    random_plan_reports,
)
from placekit.app.services.reporting import (
    config_digest,
    correlation_frame,
    emit_heatmap,
    field_frame,
    metric_rows,
    plan_frame,
    scatter_to_grid,
    write_csv,
)
from placekit.app.services.statistics import bootstrap_ci, kendall_kappa, pearson_r
from placekit.app.services.tasks import fit_normalizer, sample_sized_task, task_rng

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).parent.parent.parent.parent / "config" / "experiment.yaml"
ENV_FILE = "environment.npsp"
NP_FILE = "np.npsp"

GP_TRAIN_STREAM = 0x6701
GP_VAL_STREAM = 0x6702
SWEEP_STREAM = 0x5E3
PLACEMENT_FIELD_STREAM = 0x9C1
ORACLE_FIELD_STREAM = 0x9C2


def load_experiment_config(path: Path, seed: int | None = None) -> ExperimentConfig:
    """Parse and validate a YAML experiment config; ``seed`` overrides ``environment.seed``.

    Raises:
        InvalidConfig: If the document is not a mapping.
        ValidationError: On missing fields or bound violations.
        yaml.YAMLError: On malformed YAML.
    """
    with open(path, encoding="utf-8") as handle:
        raw = yaml.safe_load(handle) or {}
    if not isinstance(raw, dict):
        raise InvalidConfig(f"{path}: top level must be a mapping of sections")
    if seed is not None:
        raw["environment"] = {**(raw.get("environment") or {}), "seed": seed}
    return ExperimentConfig.model_validate(raw)


def describe_config_error(exc: Exception) -> str:
    """One line per problem, naming the dotted field path where there is one."""
    if isinstance(exc, ValidationError):
        return "\n".join(
            f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}"
            for error in exc.errors()
        )
    return str(exc)


def config_fingerprint(config: ExperimentConfig) -> str:
    """Digest recorded in checkpoints and manifests."""
    return config_digest(config.model_dump(mode="json"))


def _stage_dir(out_root: Path, command: str) -> Path:
    directory = Path(out_root) / command
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def environment_for(config: ExperimentConfig, out_root: Path) -> SyntheticEnvironment:
    """The ``gen-env`` environment if it matches the config, else a fresh build."""
    path = Path(out_root) / "gen-env" / ENV_FILE
    if path.exists():
        env = load_environment(path)
        if env.config == config.environment:
            return env
        logger.warning("%s was built from a different environment config; rebuilding", path)
    return build_environment(config.environment)


def _normalizer(config: ExperimentConfig, env: SyntheticEnvironment) -> Normalizer:
    return fit_normalizer(env, date_splits(env).train, seed=config.environment.seed)


def _model_path(out_root: Path, name: ModelName) -> Path:
    if name == "np":
        return Path(out_root) / "train-np" / NP_FILE
    return Path(out_root) / "fit-gp" / f"{name}.npsp"


def load_models(out_root: Path, names: list[ModelName]) -> dict[str, GPModel | NPModel]:
    """Load trained models by name from their command directories.

    Raises:
        FileNotFoundError: If a model has not been fitted or trained yet.
    """
    models: dict[str, GPModel | NPModel] = {}
    for name in names:
        path = _model_path(out_root, name)
        if not path.exists():
            command = "train-np" if name == "np" else "fit-gp"
            raise FileNotFoundError(f"no checkpoint for model {name!r} at {path}; run {command}")
        models[name] = load_model(path)
    return models


def _emit_grid(
    directory: Path,
    stem: str,
    values: np.ndarray,
    env: SyntheticEnvironment,
    mask: np.ndarray | None = None,
) -> list[Path]:
    locations = env.locations()
    frame = pd.DataFrame({"x1": locations[:, 0], "x2": locations[:, 1], stem: values.ravel()})
    return [
        write_csv(frame, directory / f"{stem}.csv"),
        emit_heatmap(values, directory / f"{stem}.svg", mask=mask, title=stem),
    ]


def gen_env(config: ExperimentConfig, out_root: Path, threads: int) -> list[Path]:
    """Build the environment, checkpoint it and map its fields."""
    directory = _stage_dir(out_root, "gen-env")
    env = build_environment(config.environment)
    artifacts = [save_environment(env, directory / ENV_FILE)]
    artifacts += _emit_grid(directory, "lengthscale_1", env.lengthscale_1, env)
    artifacts += _emit_grid(directory, "lengthscale_2", env.lengthscale_2, env)
    artifacts += _emit_grid(directory, "elevation", env.elevation, env)
    artifacts += _emit_grid(directory, "mask", env.mask, env)
    for date in (0, env.config.n_dates // 4):
        field = realize_field(env, date, config.environment.seed)
        artifacts += _emit_grid(directory, f"field_date{date}", field, env)
    return artifacts


def _fitting_tasks(
    config: ExperimentConfig,
    env: SyntheticEnvironment,
    dates: list[int],
    count: int,
    stream: int,
    normalizer: Normalizer,
) -> list[Task]:
    rng = task_rng(config.gp.seed, stream)
    picks = rng.choice(dates, size=count)
    return [
        sample_sized_task(
            env,
            int(date),
            rng,
            config.gp.n_context,
            1,
            context_noise_std=config.tasks.context_noise_std,
            normalizer=normalizer,
        )
        for date in picks
    ]


def fit_gps(config: ExperimentConfig, out_root: Path, threads: int) -> list[Path]:
    """Fit every configured GP variant and checkpoint it."""
    directory = _stage_dir(out_root, "fit-gp")
    env = environment_for(config, out_root)
    splits = date_splits(env)
    normalizer = _normalizer(config, env)
    train = _fitting_tasks(
        config, env, splits.train, config.gp.n_train_tasks, GP_TRAIN_STREAM, normalizer
    )
    val = _fitting_tasks(config, env, splits.val, config.gp.n_val_tasks, GP_VAL_STREAM, normalizer)
    fingerprint = config_fingerprint(config)

    artifacts: list[Path] = []
    for variant in config.gp.variants:
        result = fit_gp(variant, train, config.gp, val)
        model = GPModel(variant, result.params, normalizer)
        artifacts.append(save_gp(model, directory / f"{variant}.npsp", fingerprint))
        history = pd.DataFrame(result.history, columns=["epoch", "train_nll", "val_nll"])
        artifacts.append(write_csv(history, directory / f"{variant}_history.csv"))
        if isinstance(result.params, GibbsParams):
            l1, l2 = lengthscale_maps(result.params, env)
            artifacts += _emit_grid(directory, f"{variant}_lengthscale_1", l1, env)
            artifacts += _emit_grid(directory, f"{variant}_lengthscale_2", l2, env)
    return artifacts


def train_neural_process(config: ExperimentConfig, out_root: Path, threads: int) -> list[Path]:
    """Train the neural process and checkpoint the best weights."""
    directory = _stage_dir(out_root, "train-np")
    env = environment_for(config, out_root)
    model = NPModel(config.np.architecture, _normalizer(config, env))
    model, history = np_train(model, env, date_splits(env), config.np.training, config.tasks)
    frame = pd.DataFrame([record.model_dump() for record in history])
    return [
        save_np(model, directory / NP_FILE, config_fingerprint(config)),
        write_csv(frame, directory / "history.csv"),
    ]


def eval_sweep(config: ExperimentConfig, out_root: Path, threads: int) -> list[Path]:
    """Metrics, sharpness and PIT histograms per (model, N_c) on test dates."""
    directory = _stage_dir(out_root, "eval-sweep")
    env = environment_for(config, out_root)
    test_dates = date_splits(env).test
    models = load_models(out_root, config.sweep.models)
    sweep = config.sweep

    rows: list[dict[str, Any]] = []
    pit_rows: list[dict[str, Any]] = []
    for n_context in sweep.n_context:
        rng = task_rng(sweep.seed, SWEEP_STREAM, n_context)
        dates = rng.choice(test_dates, size=sweep.tasks_per_setting)
        for name, model in models.items():
            tasks = [
                sample_sized_task(
                    env,
                    int(date),
                    task_rng(sweep.seed, SWEEP_STREAM, n_context, i),
                    n_context,
                    sweep.n_targets,
                    normalizer=model.normalizer,
                )
                for i, date in enumerate(dates)
            ]
            report = evaluate_tasks(model, tasks)
            predictions = [model.predict(task) for task in tasks]
            spread = float(np.mean([sharpness(p) for p in predictions])) * model.normalizer.std
            rows.append(
                metric_rows(report, model=name, n_context=n_context) | {"sharpness": spread}
            )
            pits = np.concatenate(
                [pit_values(p, t.target_values) for p, t in zip(predictions, tasks)]
            )
            counts, edges = pit_histogram(pits, sweep.pit_bins)
            pit_rows.extend(
                {
                    "model": name,
                    "n_context": n_context,
                    "bin_lo": edges[b],
                    "bin_hi": edges[b + 1],
                    "count": int(counts[b]),
                }
                for b in range(len(counts))
            )
            logger.info(
                "%s at N_c=%d: rmse %.4f, marginal NLL %.4f",
                name,
                n_context,
                report.rmse,
                report.marginal_nll,
            )
    return [
        write_csv(pd.DataFrame(rows), directory / "sweep.csv"),
        write_csv(pd.DataFrame(pit_rows), directory / "pit.csv"),
    ]


def _placement_setup(
    config: ExperimentConfig, env: SyntheticEnvironment
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Search grid (which doubles as the target set), its cells and the station network."""
    search, cells = search_grid(env, config.placement.search_stride)
    stations = station_locations(env, config.placement.n_stations, config.placement.station_seed)
    return search, cells, stations


def place(config: ExperimentConfig, out_root: Path, threads: int) -> list[Path]:
    """Greedy placements per (model, kind) and their held-out evaluation."""
    directory = _stage_dir(out_root, "place")
    env = environment_for(config, out_root)
    splits = date_splits(env)
    section = config.placement
    models = load_models(out_root, section.models)

    artifacts: list[Path] = []
    rows: list[dict[str, Any]] = []
    for name, model in models.items():
        search, cells, stations = _placement_setup(config, env)
        acquisition_tasks = placement_tasks(
            env,
            evenly_spaced(splits.val, section.n_dates),
            stations,
            search,
            model.normalizer,
            PLACEMENT_FIELD_STREAM,
        )
        test_tasks = placement_tasks(
            env,
            evenly_spaced(splits.test, section.n_test_dates),
            stations,
            search,
            model.normalizer,
            PLACEMENT_FIELD_STREAM,
        )
        for kind in section.kinds:
            plan = greedy_place(
                model, kind, acquisition_tasks, search, search, section.k, threads=threads
            )
            stem = f"{name}_{kind}"
            artifacts.append(write_csv(plan_frame(plan), directory / f"{stem}_plan.csv"))
            if plan.steps:
                first = plan.steps[0].field
                artifacts.append(write_csv(field_frame(first), directory / f"{stem}_field.csv"))
                artifacts.append(
                    emit_heatmap(
                        scatter_to_grid(first.values, cells, env.grid_size),
                        directory / f"{stem}_field.svg",
                        title=stem,
                    )
                )
            if kind == AcquisitionKind.RANDOM:
                reports = random_plan_reports(
                    model,
                    env,
                    test_tasks,
                    search,
                    search,
                    section.k,
                    list(range(section.random_seeds)),
                )
            else:
                reports = evaluate_plan(model, plan.locations, env, test_tasks)
            rows.extend(
                metric_rows(report, model=name, kind=str(kind), k=k)
                for k, report in enumerate(reports)
            )
    artifacts.append(write_csv(pd.DataFrame(rows), directory / "placement_metrics.csv"))
    return artifacts


def oracle_correlation(config: ExperimentConfig, out_root: Path, threads: int) -> list[Path]:
    """Correlate each acquisition field with each oracle field, with bootstrap intervals."""
    directory = _stage_dir(out_root, "oracle-corr")
    env = environment_for(config, out_root)
    section = config.placement
    models = load_models(out_root, section.models)
    dates = evenly_spaced(date_splits(env).test, section.oracle_dates)

    artifacts: list[Path] = []
    reports: list[CorrelationReport] = []
    for name, model in models.items():
        search, cells, stations = _placement_setup(config, env)
        tasks = placement_tasks(env, dates, stations, search, model.normalizer, ORACLE_FIELD_STREAM)
        fields = {
            kind: acquisition_field(model, kind, tasks, search, search, threads=threads)
            for kind in section.kinds
        }
        oracles = {
            kind: oracle_acquisition(model, kind, env, tasks, search, search, threads=threads)
            for kind in section.oracle_kinds
        }
        for kind, field in {**fields, **oracles}.items():
            stem = f"{name}_{kind}"
            artifacts.append(write_csv(field_frame(field), directory / f"{stem}_field.csv"))
            artifacts.append(
                emit_heatmap(
                    scatter_to_grid(field.values, cells, env.grid_size),
                    directory / f"{stem}_field.svg",
                    title=stem,
                )
            )
        for kind, field in fields.items():
            for oracle_kind, oracle in oracles.items():
                reports.append(
                    CorrelationReport(
                        kind=kind,
                        oracle=oracle_kind,
                        model=name,
                        pearson_r=pearson_r(field.values, oracle.values),
                        pearson_ci=bootstrap_ci(
                            field.values,
                            oracle.values,
                            pearson_r,
                            section.bootstrap_resamples,
                            section.bootstrap_seed,
                        ),
                        kendall_kappa=kendall_kappa(field.values, oracle.values),
                        kendall_ci=bootstrap_ci(
                            field.values,
                            oracle.values,
                            kendall_kappa,
                            section.bootstrap_resamples,
                            section.bootstrap_seed,
                        ),
                        n_resamples=section.bootstrap_resamples,
                        n_sites=field.size,
                    )
                )
                logger.info(
                    "%s %s vs %s: r=%.3f kappa=%.3f",
                    name,
                    kind,
                    oracle_kind,
                    reports[-1].pearson_r,
                    reports[-1].kendall_kappa,
                )
    artifacts.append(write_csv(correlation_frame(reports), directory / "correlation.csv"))
    return artifacts


def pareto(config: ExperimentConfig, out_root: Path, threads: int) -> list[Path]:
    """Pareto ranks of search sites on informativeness versus cost."""
    directory = _stage_dir(out_root, "pareto")
    env = environment_for(config, out_root)
    section = config.placement
    model = load_models(out_root, [section.pareto_model])[section.pareto_model]
    search, cells, stations = _placement_setup(config, env)
    tasks = placement_tasks(
        env,
        evenly_spaced(date_splits(env).val, section.n_dates),
        stations,
        search,
        model.normalizer,
        PLACEMENT_FIELD_STREAM,
    )
    info = acquisition_field(model, section.informativeness, tasks, search, search, threads=threads)
    cost = acquisition_field(model, section.cost, tasks, search, search, threads=threads)
    points = pareto_ranks(info.values, cost.values)
    frame = pd.DataFrame(
        {
            "index": [p.index for p in points],
            "x1": search[:, 0],
            "x2": search[:, 1],
            "informativeness": [p.informativeness for p in points],
            "cost": [p.cost for p in points],
            "rank": [p.rank for p in points],
        }
    )
    ranks = np.array([p.rank for p in points], dtype=np.float64)
    front = int(np.sum(ranks == 1))
    logger.info("Pareto front of %s holds %d of %d sites", model.name, front, len(points))
    return [
        write_csv(frame, directory / "pareto.csv"),
        emit_heatmap(
            scatter_to_grid(ranks, cells, env.grid_size),
            directory / "pareto_rank.svg",
            title="pareto rank",
        ),
    ]


def plot(config: ExperimentConfig, out_root: Path, threads: int) -> list[Path]:
    """Covariance maps, their seasonal correlation change and predictive samples."""
    directory = _stage_dir(out_root, "plot")
    env = environment_for(config, out_root)
    section = config.plot
    models = load_models(out_root, section.models)
    mask = env.mask > 0

    artifacts: list[Path] = []
    for name, model in models.items():
        for date in section.dates:
            cov = prior_covariance_map(model, env, date, section.anchor)
            artifacts += _emit_grid(directory, f"{name}_covariance_date{date}", cov, env, mask)
        diff = correlation_difference(model, env, section.dates, section.anchor)
        artifacts += _emit_grid(directory, f"{name}_correlation_difference", diff, env, mask)
        if section.n_samples:
            stations = station_locations(
                env, config.placement.n_stations, config.placement.station_seed
            )
            task = placement_tasks(
                env,
                [section.dates[0]],
                stations,
                env.locations(),
                model.normalizer,
                section.sample_seed,
            )[0]
            samples = draw_samples(model, env, task, section.n_samples, section.sample_seed)
            for i, sample in enumerate(samples):
                artifacts.append(
                    emit_heatmap(
                        sample, directory / f"{name}_sample{i}.svg", mask, f"{name} sample {i}"
                    )
                )
    return artifacts


PIPELINES = {
    "gen-env": gen_env,
    "fit-gp": fit_gps,
    "train-np": train_neural_process,
    "eval-sweep": eval_sweep,
    "place": place,
    "oracle-corr": oracle_correlation,
    "pareto": pareto,
    "plot": plot,
}
