"""Distributed zero-order optimisation over agent networks."""

__version__ = "0.1.0"
