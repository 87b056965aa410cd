"""Lie-group preserving integrators and learned residual dynamics for rigid N-body systems."""

__version__ = "0.1.0"
