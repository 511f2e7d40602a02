"""Convex, frequency-domain training of single-layer convolutional auto-encoders."""

__version__ = "0.1.0"
