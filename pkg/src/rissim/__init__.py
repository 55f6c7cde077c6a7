"""Geometry-consistent channel simulation for RIS-assisted MIMO downlinks."""

__version__ = "0.1.0"
