"""Dual-encoder video-text retrieval with pluggable similarity calculators."""

__version__ = "0.1.0"
