"""Simulation and inference for preferential attachment with a time-varying offset."""

__version__ = "0.1.0"
