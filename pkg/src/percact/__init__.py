"""Bounded-rational serial perception-action channels."""

__version__ = "0.1.0"
