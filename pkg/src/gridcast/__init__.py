"""gridcast - Spatiotemporal forecasting of gridded weather fields."""

__version__ = "0.1.0"
