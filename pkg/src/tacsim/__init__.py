"""Finite-element tactile elastomer simulation with barrier-based contact."""

__version__ = "0.1.0"
