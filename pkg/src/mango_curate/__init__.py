"""Curate single-date image/mask pairs by matched-filter separability ranking."""

__version__ = "0.1.0"
