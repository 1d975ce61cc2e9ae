"""Causally consistent partial replication with edge-indexed timestamps."""

__version__ = "0.1.0"
