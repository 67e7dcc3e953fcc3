"""Constrained reinforcement-learning simulator of music sight reading."""

__version__ = "0.1.0"
