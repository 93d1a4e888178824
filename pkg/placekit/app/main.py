"""Main application module for the placekit command line."""

import logging

import typer

from placekit import __version__
from placekit.app.api.commands import COMMANDS
from placekit.app.config import settings
from placekit.app.telemetry import setup_telemetry

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def create_app() -> typer.Typer:
    """Creates and configures the command application.

    Configures logging from settings, sets up tracing and registers every
    subcommand.

    Returns:
        typer.Typer: The configured application.
    """
    logging.basicConfig(level=settings.log_level, format=LOG_FORMAT)

    app = typer.Typer(
        name="placekit",
        help=f"placekit {__version__}: sensor placement with neural processes and GPs.",
        no_args_is_help=True,
        add_completion=False,
        pretty_exceptions_enable=False,
    )

    logger.debug("Setting up telemetry...")
    setup_telemetry()

    for name, command in COMMANDS.items():
        app.command(name)(command)

    return app
