"""Lattice, cluster and Fourier-side tools for observability of Schrödinger waves on tori."""

__version__ = "0.1.0"
