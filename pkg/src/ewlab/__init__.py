"""Numerical laboratory for three-dimensional Einstein-Weyl geometry."""

__version__ = "0.1.0"
