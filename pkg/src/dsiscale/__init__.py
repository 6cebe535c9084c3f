"""Discrete scale invariant processes: construction, exact simulation and
time-dependent Hurst estimation."""

__version__ = "0.1.0"
