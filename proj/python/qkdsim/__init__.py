"""Polarization BB84 link simulator."""

from ._qkdsim import *  # noqa: F401,F403
from ._qkdsim import ConvergenceError, InvalidInput, load_scenario

__all__ = [name for name in dir() if not name.startswith("_")]
