"""Particle crowd engine with piecewise-linear visco-elastic interactions."""

__version__ = "0.1.0"
