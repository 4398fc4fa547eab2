"""Relative-energy laboratory for Euler systems generated by potential energies on the torus."""
from .torus import TorusGrid

__all__ = ["TorusGrid"]
__version__ = "0.1.0"
