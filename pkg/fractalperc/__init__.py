"""Rigorous bounds for the critical probability of fractal percolation."""

__version__ = "0.4.0"
