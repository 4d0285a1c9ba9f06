"""Weighted lattice-point counts on integral quadrics and their circle-method asymptotics."""

__version__ = "0.1.0"
