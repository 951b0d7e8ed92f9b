"""Terrestrial + HAPS-RIS network planning and beyond-cell resource allocation."""

__version__ = "0.1.0"
