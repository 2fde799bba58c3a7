"""Stochastic gCLMG equation on the circle: spectral solver and ergodicity lab."""

__version__ = "0.1.0"
