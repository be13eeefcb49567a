"""Likelihood-based confidence curves with median bias correction."""

__version__ = "0.1.0"
