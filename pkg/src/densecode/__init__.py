"""Simulation and certification tools for entanglement-assisted stochastic communication."""

__version__ = "0.1.0"
