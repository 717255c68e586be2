"""Strawberry algorithm (SBA) for bound-constrained minimisation."""

from .core import (
    Bounds,
    ConfigurationError,
    EmptyRunError,
    RunResult,
    RunTrace,
    SbaParams,
    run,
)
from .objectives import griewank, rastrigin, sphere

__version__ = "0.1.0"

__all__ = [
    "Bounds",
    "ConfigurationError",
    "EmptyRunError",
    "RunResult",
    "RunTrace",
    "SbaParams",
    "run",
    "griewank",
    "rastrigin",
    "sphere",
]
