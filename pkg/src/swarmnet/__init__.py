"""Deterministic simulator for self-organizing machine swarms on a cellular substrate."""

__version__ = "0.1.0"
