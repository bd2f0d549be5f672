"""Road-construction forecasting over hexagonal zones."""

__version__ = "0.1.0"
