"""Existential real arithmetic with activation functions: normalizer, network compiler and solver."""

__version__ = "0.1.0"
