"""Detect Pareto coordination among agents sharing a linear budget."""

__version__ = "0.1.0"
