"""Covariant POVMs for finite groups: membership, extremality and applications."""

__version__ = "0.1.0"
