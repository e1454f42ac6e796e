"""Simulation and adversarial scheduling of fully symmetric round protocols."""
__version__ = "0.1.0"
