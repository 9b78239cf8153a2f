"""Simulation and pathwise verification of symmetric splitting times of
symmetric random walks."""

__version__ = "0.1.0"
