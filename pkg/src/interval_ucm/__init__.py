"""Unobserved-components models for interval-valued monthly series."""

__version__ = "0.1.0"
