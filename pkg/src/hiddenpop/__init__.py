"""Bayesian spatial panel frontier model for hidden-population inference."""

__version__ = "0.1.0"
