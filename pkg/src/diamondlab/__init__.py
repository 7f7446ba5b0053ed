"""Numerics for directed polymers on the diamond hierarchical lattice."""

__version__ = "0.1.0"
