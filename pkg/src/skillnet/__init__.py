"""Continual skill learning over a network of small executable programs."""

__version__ = "0.1.0"
