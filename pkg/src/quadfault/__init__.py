"""Sim-to-real quadrotor propeller fault diagnosis at desk scale."""

__version__ = "0.1.0"
