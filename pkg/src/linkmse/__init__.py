"""Bayesian record linkage feeding linkage-averaged population size estimation."""

__version__ = "0.1.0"
