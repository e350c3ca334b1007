"""Integrable affine Hamiltonian flows on symmetric spaces."""

__version__ = "0.1.0"
