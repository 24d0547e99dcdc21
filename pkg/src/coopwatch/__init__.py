"""Poultry-disease detection evaluation and monitoring."""

__version__ = "0.1.0"
