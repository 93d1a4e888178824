"""Application configuration management."""

import logging
import os
from functools import lru_cache
from typing import Any

from pydantic import model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level settings managed via Pydantic BaseSettings.

    Experiment parameters live in the YAML experiment config; these settings
    only cover how the process runs.

    Attributes:
        LOG_LEVEL: The logging level for the application.
        PLACEKIT_OUT: Default output root for run artifacts.
        PLACEKIT_THREADS: Worker cap for parallel sweeps (0 = machine parallelism).
        CSV_SIGNIFICANT_DIGITS: Significant digits written for floats in CSV files.
        PROMETHEUS_ENABLED: Whether each run writes a Prometheus text-format snapshot.
        OTEL_ENABLED: Whether OpenTelemetry tracing is enabled.
        OTEL_SERVICE_NAME: The service name reported to OpenTelemetry.
        OTEL_EXPORTER_OTLP_ENDPOINT: The OTLP endpoint; empty means console export.
        OTLP_SECURE: Whether to use a secure connection for OTLP.
    """

    # Logging Configuration
    LOG_LEVEL: str = "INFO"

    # Run Configuration
    PLACEKIT_OUT: str = "runs"
    PLACEKIT_THREADS: int = 0
    CSV_SIGNIFICANT_DIGITS: int = 17

    # Prometheus Configuration
    PROMETHEUS_ENABLED: bool = True

    # OpenTelemetry Configuration
    OTEL_ENABLED: bool = False
    OTEL_SERVICE_NAME: str = "placekit"
    OTEL_EXPORTER_OTLP_ENDPOINT: str = ""
    OTLP_SECURE: bool = False

    @model_validator(mode="before")
    @classmethod
    def _strip_inline_comments(cls, data: Any) -> Any:
        if isinstance(data, dict):
            cleaned_data = {}
            for key, value in data.items():
                if isinstance(value, str):
                    cleaned_data[key] = value.split("#")[0].strip()
                else:
                    cleaned_data[key] = value
            return cleaned_data
        return data

    @property
    def log_level(self) -> int:
        """Convert the string log level from settings to a logging constant.

        Returns:
            The integer value of the logging level (e.g., logging.INFO,
            logging.DEBUG). Defaults to logging.INFO if the configured
            LOG_LEVEL is invalid.
        """
        return getattr(logging, self.LOG_LEVEL.upper(), logging.INFO)

    @property
    def threads(self) -> int:
        """Resolved worker count; never less than one."""
        if self.PLACEKIT_THREADS > 0:
            return self.PLACEKIT_THREADS
        return os.cpu_count() or 1

    @property
    def float_format(self) -> str:
        """printf-style float format used for CSV output."""
        return f"%.{self.CSV_SIGNIFICANT_DIGITS}g"

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")


@lru_cache()
def get_settings() -> Settings:
    """Create and cache a Settings instance.

    Returns:
        A cached instance of the Settings class.
    """
    return Settings()


settings = get_settings()
