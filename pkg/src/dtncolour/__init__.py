"""Routing-latency prediction for delay tolerant networks from colouring processes on contact traces."""

__version__ = "0.1.0"
