"""Desk-scale garden/compost telemetry pipeline and statistics toolkit."""

__version__ = "0.1.0"
