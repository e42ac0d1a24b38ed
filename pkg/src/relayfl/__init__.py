"""Relay-assisted federated learning: channels, grouping, power control and FL simulation."""

__version__ = "0.1.0"
