"""Spectral simulation and verification suite for the one-dimensional Landau-Pekar equations."""

__version__ = "0.1.0"
