"""Deterministic figure rendering for acceleration-envelope run artifacts."""

__version__ = "0.1.0"
