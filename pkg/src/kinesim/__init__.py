"""Simulator and sizing toolkit for motion-powered batteryless sensing nodes."""

__version__ = "0.1.0"
