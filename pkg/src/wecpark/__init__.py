"""Robust damping/stiffness control optimization for arrays of heaving
wave-energy converters under stochastic wave direction."""

__version__ = "0.1.0"
