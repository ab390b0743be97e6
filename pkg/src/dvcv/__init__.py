"""Simulation of hybrid polarization / cat-state qubit protocols."""

__version__ = "0.1.0"
