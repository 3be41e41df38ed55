"""Desk-scale audio-visual source separation laboratory."""

__version__ = "0.1.0"
