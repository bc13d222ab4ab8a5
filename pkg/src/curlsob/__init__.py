"""Numerical toolkit for the curl–Sobolev quotient of vector fields on R^3."""

__version__ = "0.1.0"
