"""Numerical Patterson-Sullivan theory for Anosov representations of free groups."""

__version__ = "0.1.0"
