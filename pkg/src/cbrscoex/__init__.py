"""Aggregate CBSD interference at a shipborne radar and downlink power control."""

__version__ = "0.1.0"
