"""Deterministic islanded-microgrid simulation with hierarchical control and
battery-backed predictive energy management."""

__version__ = "0.1.0"
