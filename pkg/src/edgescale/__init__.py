"""Simulation and verification tools for the edge scaling limit of 1D random Schrödinger operators."""

__version__ = "0.1.0"
