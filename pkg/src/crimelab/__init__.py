"""Spatio-temporal crime occurrence prediction on small census regions."""

__version__ = "0.1.0"
