"""Simulator for storing an electron spin coherence in the 31P nuclear spin."""
__version__ = "0.1.0"
