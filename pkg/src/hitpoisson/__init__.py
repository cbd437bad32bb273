"""Poisson statistics of visits to shrinking balls in hyperbolic systems."""

__version__ = "0.1.0"
