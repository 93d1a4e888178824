"""Domain exceptions raised by placekit services."""


class PlacekitError(Exception):
    """Base class for every error raised by placekit."""


class InvalidConfig(PlacekitError):
    """A configuration value is missing, out of range or inconsistent."""


class NotPositiveDefinite(PlacekitError):
    """A covariance matrix could not be factorised, even with maximum jitter."""


class ShapeMismatch(PlacekitError):
    """Array dimensions disagree between two arguments."""


class OutOfDomain(PlacekitError):
    """A location lies outside the normalised [-1, 1] x [-1, 1] domain."""


class OptimizationDiverged(PlacekitError):
    """An objective became non-finite during optimisation."""


class CorruptCheckpoint(PlacekitError):
    """A checkpoint container is malformed.

    Attributes:
        detail: Machine-readable reason (e.g. ``"bad magic"``, ``"version 3"``).
    """

    def __init__(self, message: str, detail: str | None = None) -> None:
        super().__init__(message)
        self.detail = detail


class EmptyContext(PlacekitError):
    """An operation needs at least one observation context point."""


class DegenerateInput(PlacekitError):
    """A statistic is undefined for the input (e.g. zero variance)."""
