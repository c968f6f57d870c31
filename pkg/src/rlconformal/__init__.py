"""Conformal prediction intervals for infinite-horizon returns in RL."""

__version__ = "0.1.0"
