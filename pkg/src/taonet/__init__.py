"""Two-stage adaptive ID/OOD encrypted traffic classification."""

__version__ = "0.1.0"
