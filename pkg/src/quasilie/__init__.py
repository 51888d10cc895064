"""Quasi-Lie schemes, PDE Lie systems and superposition rules, numerically."""

__version__ = "0.1.0"
