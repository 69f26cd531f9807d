"""Numerical laboratory for the mass-constrained Hartree (Choquard) problem."""
__version__ = "0.1.0"
