"""Wheel-legged quadruped simulation, training and efficiency evaluation."""

__version__ = "0.1.0"
