"""Birkhoff normal form toolkit for a truncated nonlinear Klein-Gordon equation on [0, pi]."""

__version__ = "0.1.0"
