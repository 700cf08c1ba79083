"""Lattice-periodic partitions of the plane and their perimeter energies."""

__version__ = "0.1.0"
