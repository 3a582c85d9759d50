"""Bayesian optimization with alpha-ratio length-scale cool down and the MGL kernel."""

__version__ = "0.1.0"
