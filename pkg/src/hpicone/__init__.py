"""Horizontal calculus, Picone-type inequalities and a variational p-sub-Laplacian solver on the Heisenberg group."""

__version__ = "0.1.0"
