"""Differentiable architecture search for link-aware message-passing networks."""

__version__ = "0.1.0"
