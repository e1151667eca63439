"""Hybrid decomposition algorithms over QUBO sampler backends."""

__version__ = "0.1.0"
