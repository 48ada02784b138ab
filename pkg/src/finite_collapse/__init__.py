"""Finite-time wave-function collapse with entangled photon pairs."""

__version__ = "0.1.0"
