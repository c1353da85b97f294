"""Robust partial-order scheduling for RCPSP/max with uncertain durations."""

__version__ = "0.1.0"
