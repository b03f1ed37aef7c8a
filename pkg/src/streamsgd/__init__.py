"""Streaming SGD estimators for regression, sparse regression and linear bandits."""

__version__ = "0.1.0"
