"""Delivery-time minimization for full-duplex mobile edge caching networks."""

__version__ = "0.1.0"
