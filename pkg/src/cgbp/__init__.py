"""Coarse-grained belief propagation for quantum spin chains and trees."""

__version__ = "0.1.0"
