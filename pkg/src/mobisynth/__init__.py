"""Synthetic mobility identities and driving trajectories."""

__version__ = "0.1.0"
