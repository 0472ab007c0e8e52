"""Discrete-time neural survival models with discrimination, calibration,
fairness and permutation-importance audits."""

__version__ = "0.1.0"
