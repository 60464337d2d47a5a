"""Alias of :mod:`bgpbt.pbt` under the scheduler's descriptive name."""

from .pbt import *  # noqa: F401,F403
from .pbt import __all__  # noqa: F401
