"""Spectral and Monte-Carlo laboratory for SDEs with distributional drift on the torus."""

__version__ = "0.1.0"
