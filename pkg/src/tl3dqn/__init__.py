"""Adaptive traffic-signal timing with a double dueling deep Q-network."""

__version__ = "0.1.0"
