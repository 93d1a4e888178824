#!/usr/bin/env python
"""Entry point for the placekit command line."""

from placekit.app.main import create_app
from placekit.app.telemetry import shutdown_telemetry


def main() -> None:
    """Run the command application and flush telemetry on the way out."""
    app = create_app()
    try:
        app(prog_name="placekit")
    finally:
        shutdown_telemetry()


if __name__ == "__main__":
    main()
