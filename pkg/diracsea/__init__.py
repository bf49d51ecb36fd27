"""Lattice simulator of spontaneous particle-antiparticle pair creation."""

__version__ = "0.1.0"
