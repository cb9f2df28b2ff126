"""Clip-level similarity aggregation for video sequence matching."""

__version__ = "0.1.0"
