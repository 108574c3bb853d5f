"""Stationary states, feeder environments and split-operator dynamics for a
BEC in a PT-symmetric double-delta potential."""

__version__ = "0.1.0"
