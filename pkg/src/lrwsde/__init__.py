"""Lattice random walk discretisation of SDEs, with baselines and experiments."""

__version__ = "0.1.0"
