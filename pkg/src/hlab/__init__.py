"""Numerical laboratory for periodic homogenization of Neumann problems."""

__version__ = "0.1.0"
