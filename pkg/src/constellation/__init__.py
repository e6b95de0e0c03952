"""Constellation: an edge-based semantic runtime for IoT applications."""

__version__ = "0.1.0"
