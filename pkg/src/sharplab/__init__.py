"""Phase-field energies, their inner variations and sharp-interface limits."""

__version__ = "0.1.0"
