"""Spectral partitioning of MATPOWER networks and distributed ADMM OPF."""

__version__ = "0.1.0"
