"""Benchmark objectives and their registry."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Bounds

__all__ = ["rastrigin", "griewank", "sphere", "BenchmarkSpec", "REGISTRY", "get_benchmark", "UnknownObjectiveError"]


def rastrigin(x):
    x = np.asarray(x, dtype=float)
    return float(10.0 * x.size + np.sum(x**2 - 10.0 * np.cos(2.0 * np.pi * x)))


def griewank(x):
    """Griewank function in the standard form, shifted by +1 so that f(0) = 0."""
    x = np.asarray(x, dtype=float)
    k = np.arange(1, x.size + 1)
    return float(1.0 + np.sum(x**2) / 4000.0 - np.prod(np.cos(x / np.sqrt(k))))


def sphere(x):
    x = np.asarray(x, dtype=float)
    return float(np.sum(x**2))


class UnknownObjectiveError(KeyError):
    def __str__(self):
        return f"unknown objective {self.args[0]!r} (known: {', '.join(sorted(REGISTRY))})"


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    dimension: int
    function: Callable[[np.ndarray], float]
    bounds: Bounds
    known_optimum_position: np.ndarray
    known_optimum_value: float

    def __call__(self, x):
        return self.function(x)


# name -> (function, half-width of the canonical symmetric box)
REGISTRY = {
    "rastrigin": (rastrigin, 5.12),
    "griewank": (griewank, 600.0),
    "sphere": (sphere, 5.12),
}


def get_benchmark(name: str, dimension: int) -> BenchmarkSpec:
    try:
        fn, half = REGISTRY[name]
    except KeyError:
        raise UnknownObjectiveError(name) from None
    if not isinstance(dimension, (int, np.integer)) or dimension < 1:
        raise ValueError(f"dimension must be a positive integer, got {dimension!r}")
    return BenchmarkSpec(
        name=name,
        dimension=int(dimension),
        function=fn,
        bounds=Bounds.uniform(-half, half, int(dimension)),
        known_optimum_position=np.zeros(int(dimension)),
        known_optimum_value=0.0,
    )
