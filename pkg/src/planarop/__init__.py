"""Potential-theoretic asymptotics of planar orthogonal polynomials."""

__version__ = "0.1.0"
