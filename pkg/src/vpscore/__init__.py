"""Vantage-point redundancy scoring and selection for BGP route collection."""

__version__ = "0.1.0"
