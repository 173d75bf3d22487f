"""Finite Abelian lattice gauge theory on boxes of Z^4."""

__version__ = "0.1.0"
