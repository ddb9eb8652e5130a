"""Conical minimal speeds of KPP fronts in periodic shear flows."""

__version__ = "0.1.0"
