"""Device fingerprinting from packet inter-arrival-time images."""

__version__ = "0.1.0"
