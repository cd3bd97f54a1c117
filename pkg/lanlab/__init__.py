"""Simulation, likelihood and local asymptotic normality experiments for
degenerate diffusions driven by a periodic signal of unknown shape and period."""

__version__ = "0.1.0"
