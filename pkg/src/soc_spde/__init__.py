"""Simulation and verification tools for singular diffusion with multiplicative noise on (0, pi)."""

__version__ = "0.1.0"
