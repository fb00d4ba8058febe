"""Trajectory reconstruction for the Kuramoto-Sivashinsky equation from sparse measurements."""

__version__ = "0.1.0"
