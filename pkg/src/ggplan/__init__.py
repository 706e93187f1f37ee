"""Acceleration-envelope toolkit built around a 9-DOF vehicle model."""

__version__ = "0.1.0"
