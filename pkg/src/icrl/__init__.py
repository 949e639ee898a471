"""Simulation and verification testbed for invariance-based causal representation learning."""

__version__ = "0.1.0"
