"""Common interface of the GP baselines and the neural process."""

from typing import Protocol, runtime_checkable

from placekit.app.models.gaussian import GaussianPredictive
from placekit.app.models.task import Normalizer, Task


@runtime_checkable
class Predictor(Protocol):
    """A prediction map from a task to a Gaussian over its targets."""

    name: str
    normalizer: Normalizer

    def predict(self, task: Task, *, latent: bool = False) -> GaussianPredictive:
        """Predictive distribution at ``task.target_locations`` (normalised units)."""
        ...
