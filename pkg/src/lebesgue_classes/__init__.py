"""Parametric integrability of power-constructible functions."""

__version__ = "0.1.0"
