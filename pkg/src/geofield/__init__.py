"""Radiance-field rendering with multi-view geometric supervision."""

__version__ = "0.1.0"
