"""Command-line subcommands for placekit."""
