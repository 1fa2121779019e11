"""Weighted generalized fractional operators with a Mittag-Leffler kernel,
their integration-by-parts identities, and optimal control / variational
solvers built on them."""

__version__ = "0.1.0"
