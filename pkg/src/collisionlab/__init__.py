"""Numerical laboratory for collision geometry in n-body systems."""

__version__ = "0.1.0"
