"""Numerical laboratory for small standing waves of the 1D cubic NLS with a trapping potential."""

__version__ = "0.1.0"
