"""Initialize services package."""

from .acquisition import acquisition_average, acquisition_eval, acquisition_field
from .checkpoint import load_model
from .environment import build_environment, realize_field
from .gp import GPModel, fit_gp, gp_predict
from .neural_process import NPModel, np_train
from .pareto import pareto_ranks
from .placement import evaluate_plan, greedy_place, oracle_acquisition
from .statistics import bootstrap_ci, kendall_kappa, pearson_r

__all__ = [
    "GPModel",
    "NPModel",
    "acquisition_average",
    "acquisition_eval",
    "acquisition_field",
    "bootstrap_ci",
    "build_environment",
    "evaluate_plan",
    "fit_gp",
    "gp_predict",
    "greedy_place",
    "kendall_kappa",
    "load_model",
    "np_train",
    "oracle_acquisition",
    "pareto_ranks",
    "pearson_r",
    "realize_field",
]
