"""Bayesian mitigation of multi-qubit readout errors."""

__version__ = "0.1.0"
