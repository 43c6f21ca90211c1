"""Distributed online mirror descent with multi-step decision and gradient consensus."""

from . import algorithms, cli, data, geometry, losses, metrics, topology

__all__ = ["algorithms", "cli", "data", "geometry", "losses", "metrics", "topology"]
__version__ = "0.1.0"
