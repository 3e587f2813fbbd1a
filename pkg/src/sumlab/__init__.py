"""Numerical laboratory for summing constants of operators between
finite-dimensional normed spaces: two-sided bounds, explicit dominating
measures, domination-space construction and factorization checks."""

__version__ = "0.1.0"
