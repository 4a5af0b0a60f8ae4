"""Underdamped Langevin Monte Carlo and randomized midpoint sampling toolkit."""

__version__ = "0.1.0"
