"""Initialize the models package."""

from .environment import (
    DateSplits,
    EnvironmentConfig,
    SyntheticEnvironment,
    TaskSamplingConfig,
)
from .experiment_config import ExperimentConfig
from .gaussian import DenseGaussian, GaussianPredictive, LowRankDiagGaussian
from .kernel_params import EQParams, GibbsParams, KernelParams, RQParams
from .manifest import RunManifest
from .metric_report import MetricReport
from .neural_process import EpochRecord, GridEncoding, NPArchitecture, TrainConfig
from .placement import (
    AcquisitionField,
    AcquisitionKind,
    CorrelationReport,
    ParetoPoint,
    PlacementPlan,
    PlacementStep,
)
from .task import ContextSet, GridSpec, Normalizer, Task

__all__ = [
    "AcquisitionField",
    "AcquisitionKind",
    "ContextSet",
    "CorrelationReport",
    "DateSplits",
    "DenseGaussian",
    "EnvironmentConfig",
    "EpochRecord",
    "EQParams",
    "ExperimentConfig",
    "GaussianPredictive",
    "GibbsParams",
    "GridEncoding",
    "GridSpec",
    "KernelParams",
    "LowRankDiagGaussian",
    "MetricReport",
    "Normalizer",
    "NPArchitecture",
    "ParetoPoint",
    "PlacementPlan",
    "PlacementStep",
    "RQParams",
    "RunManifest",
    "SyntheticEnvironment",
    "TaskSamplingConfig",
    "Task",
    "TrainConfig",
]
