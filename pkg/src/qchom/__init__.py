"""Homogenisation of quasiperiodic media by cut-and-projection onto a periodic torus."""

__version__ = "0.1.0"
