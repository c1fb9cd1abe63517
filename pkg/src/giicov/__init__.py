"""Generalized indirect inference with a change-of-variables smoother."""
__version__ = "0.1.0"
