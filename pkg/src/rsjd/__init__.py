"""Regime-switching jump diffusions: generator evaluation, Lyapunov checks,
simulation, hitting times and invariant measures."""

__version__ = "0.1.0"
