"""Pullback attractors of multivalued processes, computed on sampled sets."""

__version__ = "0.1.0"
