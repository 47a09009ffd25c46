"""Quasi-static linear elasticity coupled to Kachanov-type damage evolution."""

__version__ = "0.1.0"
