"""Numerical tests for regularity of the point at infinity."""
__version__ = "0.1.0"
