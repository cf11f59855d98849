"""Polar coding toolkit for binary-input classical-quantum channels."""

__version__ = "0.1.0"
