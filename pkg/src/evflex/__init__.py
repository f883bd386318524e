"""Online aggregate EV charging flexibility characterization."""

__version__ = "0.1.0"
