"""Simulation and numerical checks for splittable stationary random fields."""

from .errors import (
    ArgumentError,
    PremiseError,
    ScheduleError,
    SplitFieldError,
    SupportError,
    UnsupportedError,
)
from .kernels import BACKEND
from .measure import Box, SampleMeasure, TestFunction

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "BACKEND",
    "Box",
    "PremiseError",
    "SampleMeasure",
    "ScheduleError",
    "SplitFieldError",
    "SupportError",
    "TestFunction",
    "UnsupportedError",
    "__version__",
]
