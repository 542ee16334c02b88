"""Brick: asynchronous payment channels with a warden committee, simulated end to end."""

__version__ = '0.1.0'
