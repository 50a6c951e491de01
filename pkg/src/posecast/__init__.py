"""Temporal 3D body pose and shape estimation with past/future feature forecasting."""
__version__ = "0.1.0"
