"""Differentiable architecture search with Fisher-trace scheduling and proximity regularization."""

__version__ = "0.1.0"
