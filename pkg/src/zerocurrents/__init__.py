"""Numerical experiments on equidistribution of common zeros of random sections
over CP1 and CP1 x CP1."""

__version__ = "0.1.0"
