"""Alias of :mod:`bgpbt.gp` under the surrogate's descriptive name."""

from .gp import *  # noqa: F401,F403
from .gp import __all__  # noqa: F401
