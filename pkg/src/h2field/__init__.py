"""Variational energies, susceptibilities and rovibrational levels of H2+/D2+ in weak magnetic fields."""

__version__ = "0.1.0"
