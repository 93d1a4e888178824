"""OpenTelemetry configuration and utilities."""

import logging
import socket
from functools import wraps
from typing import Any, Callable, Optional, TypeVar, cast

from opentelemetry import trace
from opentelemetry.exporter.otlp.proto.grpc.trace_exporter import OTLPSpanExporter
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import (
    BatchSpanProcessor,
    ConsoleSpanExporter,
    SpanExporter,
)
from opentelemetry.semconv.resource import ResourceAttributes
from opentelemetry.trace.status import Status, StatusCode

from placekit import __version__
from placekit.app.config import settings

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

F = TypeVar("F", bound=Callable[..., Any])

# Global tracking for telemetry resources
_tracer_provider: Optional[TracerProvider] = None
_span_processors: list[BatchSpanProcessor] = []
_is_setup_complete: bool = False


def _is_collector_available(host: str, port: int, timeout: float = 0.5) -> bool:
    """Check if the OpenTelemetry collector is reachable."""
    try:
        with socket.create_connection((host, port), timeout=timeout):
            return True
    except OSError:
        return False


def annotate_run(command: str, seed: int, config_sha256: str) -> None:
    """Attach the run identity to the current span, if one is recording."""
    span = trace.get_current_span()
    if not span.is_recording():
        return
    span.set_attribute("placekit.command", command)
    span.set_attribute("placekit.seed", seed)
    span.set_attribute("placekit.config_sha256", config_sha256)


def _select_exporter() -> SpanExporter:
    """OTLP exporter when a collector answers, console exporter otherwise."""
    endpoint = settings.OTEL_EXPORTER_OTLP_ENDPOINT.strip()
    if not endpoint:
        logger.info("OTLP endpoint not configured. Using console exporter.")
        return ConsoleSpanExporter()

    host, _, port = endpoint.replace("http://", "").replace("https://", "").partition(":")
    collector_port = int(port) if port else 4317
    if not _is_collector_available(host, collector_port):
        logger.warning(
            "OTLP collector not available at %s:%d. Using console exporter.",
            host,
            collector_port,
        )
        return ConsoleSpanExporter()

    logger.info("OTLP collector is available at %s:%d", host, collector_port)
    return OTLPSpanExporter(endpoint=endpoint, insecure=not settings.OTLP_SECURE, timeout=3)


def setup_telemetry() -> None:
    """Set up OpenTelemetry tracing for the current process."""
    global _tracer_provider, _is_setup_complete

    if not settings.OTEL_ENABLED:
        logger.debug("OpenTelemetry instrumentation is disabled")
        return

    if _is_setup_complete:
        logger.debug("OpenTelemetry already configured, skipping setup")
        return

    try:
        resource = Resource.create(
            {
                ResourceAttributes.SERVICE_NAME: settings.OTEL_SERVICE_NAME,
                ResourceAttributes.SERVICE_VERSION: __version__,
            }
        )
        _tracer_provider = TracerProvider(resource=resource)
        trace.set_tracer_provider(_tracer_provider)

        processor = BatchSpanProcessor(_select_exporter())
        _tracer_provider.add_span_processor(processor)
        _span_processors.append(processor)

        _is_setup_complete = True
        logger.info("OpenTelemetry tracing configured")
    except Exception as e:
        logger.error("Failed to configure OpenTelemetry: %s", str(e))
        logger.exception(e)


def shutdown_telemetry() -> None:
    """Flush and shut down span processors."""
    global _tracer_provider, _is_setup_complete

    if not _is_setup_complete:
        return

    for processor in _span_processors:
        try:
            processor.shutdown()
        except Exception as e:
            logger.warning("Error shutting down span processor: %s", e)

    _span_processors.clear()
    _tracer_provider = None
    _is_setup_complete = False
    logger.debug("OpenTelemetry shutdown completed")


def trace_method(name: Optional[str] = None) -> Callable[[F], F]:
    """Decorator that runs a function inside an OpenTelemetry span.

    Args:
        name: Span name; defaults to the function name.
    """

    def decorator(func: F) -> F:
        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            if not settings.OTEL_ENABLED:
                return func(*args, **kwargs)

            tracer = trace.get_tracer(__name__)
            with tracer.start_as_current_span(name or func.__name__) as span:
                try:
                    span.set_attributes(
                        {
                            "function.name": func.__name__,
                            "function.args_count": len(args),
                            "function.kwargs_keys": str(list(kwargs.keys())),
                        }
                    )
                    result = func(*args, **kwargs)
                    span.set_status(Status(StatusCode.OK))
                    return result
                except Exception as e:
                    span.set_status(Status(StatusCode.ERROR, str(e)))
                    span.record_exception(e)
                    raise

        return cast(F, wrapper)

    return decorator
