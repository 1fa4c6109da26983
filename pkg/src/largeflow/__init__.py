"""Boundary-lift construction of large solutions of fast diffusion and total variation flows."""

__version__ = "0.1.0"
