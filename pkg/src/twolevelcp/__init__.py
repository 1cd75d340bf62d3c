"""Simulation, duality and block-construction tools for a two-level contact process.

Animals perform a contact process; fleas live on animals, spread between
hosted sites and die only on hostless sites. Every trajectory is read off
a shared, keyed Poisson event log so that forward runs, dual runs and
couplings in the rates all live on one probability space.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .events import EventLog, MarkKind, Rates, generate_log, thin_log
from .lattice import Configuration, SiteState, Window
from .simulate import Trajectory, run_forward

__all__ = [
    "Configuration",
    "EventLog",
    "MarkKind",
    "Rates",
    "SiteState",
    "Trajectory",
    "Window",
    "__version__",
    "generate_log",
    "run_forward",
    "thin_log",
]
