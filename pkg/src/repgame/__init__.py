"""Reputation effects in repeated games with myopic Bayesian opponents."""

__version__ = "0.1.0"
