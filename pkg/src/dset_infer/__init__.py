"""Bayesian inference under set constraints with distance-to-set priors."""

__version__ = "0.1.0"
