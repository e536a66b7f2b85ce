"""Low-energy-variance matrix product states from cosine energy filters."""

__version__ = "0.1.0"
