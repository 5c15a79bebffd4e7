"""Simulation and ground-energy tools for bosonic quantum circuits."""

__version__ = "0.1.0"
