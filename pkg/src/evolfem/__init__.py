"""Evolving isoparametric finite elements for parabolic problems on moving domains."""

__version__ = "0.1.0"
