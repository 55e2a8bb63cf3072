"""Quantum variance of Laplace eigenfunctions on flat tori, computed exactly at desk scale."""

__version__ = "0.1.0"
