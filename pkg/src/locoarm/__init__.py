"""Cooperative quadruped locomotion and 6-DoF arm pose tracking."""

__version__ = "0.1.0"
