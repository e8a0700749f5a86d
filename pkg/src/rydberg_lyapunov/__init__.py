"""Lyapunov-accelerated dissipative singlet preparation for two Rydberg atoms in a cavity."""

__version__ = "0.1.0"
