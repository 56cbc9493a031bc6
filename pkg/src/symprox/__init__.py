"""Symmetric penalties, proximal maps and their effective scalar representations."""
__version__ = "0.1.0"
