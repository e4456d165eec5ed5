"""Deterministic walks in quenched random environments of chaotic maps."""

__version__ = "0.1.0"
