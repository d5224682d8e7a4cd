"""Continuously measured 1D Bose gas: mean-field moments and positive-P dynamics."""

__version__ = "0.1.0"
