"""Test package for placekit."""
