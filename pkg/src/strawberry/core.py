"""Strawberry algorithm engine.

Every mother plant sends out a short-range root and a long-range runner at
each iteration. The offspring pool (twice the population) is scored, half
of the next generation is taken by elitism and the other half by roulette
wheel over the rest. Mothers are never evaluated themselves.

Positions are stored column-major: an ``(m, N)`` array holds ``N`` points
of dimension ``m``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

__all__ = [
    "SbaError",
    "ConfigurationError",
    "EmptyRunError",
    "Bounds",
    "SbaParams",
    "Population",
    "OffspringBatch",
    "IterationRecord",
    "RunTrace",
    "RunResult",
    "ROOT",
    "RUNNER",
    "FITNESS_CAP",
    "make_rng",
    "init_population",
    "place_offspring",
    "propagate",
    "abc_fitness",
    "rank_fitness",
    "batch_fitness",
    "selection_probabilities",
    "spin_roulette",
    "survivor_indices",
    "select_survivors",
    "step",
    "run",
]

ROOT = 0
RUNNER = 1

# abc_fitness saturates here when 1 / (shift + value) would overflow.
FITNESS_CAP = 1e300

Objective = Callable[[np.ndarray], float]
Radius = Union[float, Sequence[float], np.ndarray]


class SbaError(Exception):
    """Base class for engine errors."""


class ConfigurationError(SbaError, ValueError):
    """Invalid bounds or parameters."""


class EmptyRunError(ConfigurationError):
    """Raised when a run is asked to perform zero iterations."""

    def __init__(self, message="no iterations executed"):
        super().__init__(message)


@dataclass(frozen=True)
class Bounds:
    """Box constraints ``lower <= x <= upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.ndim != 1 or upper.ndim != 1:
            raise ConfigurationError("bounds must be one-dimensional vectors")
        if lower.size == 0:
            raise ConfigurationError("bounds must have at least one dimension")
        if lower.shape != upper.shape:
            raise ConfigurationError(
                f"lower and upper bounds differ in length ({lower.size} != {upper.size})"
            )
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise ConfigurationError("bounds must be finite")
        bad = np.flatnonzero(lower >= upper)
        if bad.size:
            raise ConfigurationError(
                f"lower bound must be below upper bound in every dimension (violated at {bad.tolist()})"
            )
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def uniform(cls, low: float, high: float, dim: int) -> "Bounds":
        return cls(np.full(dim, float(low)), np.full(dim, float(high)))

    @property
    def dim(self) -> int:
        return self.lower.size

    def clip(self, positions: np.ndarray) -> np.ndarray:
        return np.clip(positions, self.lower[:, None], self.upper[:, None])

    def contains(self, positions: np.ndarray) -> bool:
        pos = np.asarray(positions, dtype=float).reshape(self.dim, -1)
        return bool(np.all(pos >= self.lower[:, None]) and np.all(pos <= self.upper[:, None]))


@dataclass(frozen=True)
class SbaParams:
    """Tunables of the algorithm.

    Parameters
    ----------
    n_mothers : int
        Population size ``N``.
    d_root, d_runner : float or array_like
        Root and runner lengths. A scalar applies to every dimension, a
        vector gives one length per dimension.
    fitness_shift : float, default 0
        Shift ``a`` of the ABC-style fitness map.
    fitness_mode : {"abc", "ranking"}
        Fitness used by the roulette wheel.
    selection_pressure : float, default 2
        Spread of the ranking fitness, in ``[1, 2]``.
    multiplicity : int, default 1
        Roots and runners produced per mother per iteration.
    roulette_pool : {"full", "remainder"}
        ``"full"`` spins the wheel over the whole offspring batch with
        replacement. ``"remainder"`` draws without replacement from the
        columns left after elite selection.
    max_iterations : int, default 100
    target_value : float, optional
        Stop as soon as the incumbent is ``<=`` this value.
    seed : int, default 0
    """

    n_mothers: int
    d_root: Radius
    d_runner: Radius
    fitness_shift: float = 0.0
    fitness_mode: str = "abc"
    selection_pressure: float = 2.0
    multiplicity: int = 1
    roulette_pool: str = "full"
    max_iterations: int = 100
    target_value: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if not _is_int(self.n_mothers) or self.n_mothers < 1:
            raise ConfigurationError(f"n_mothers must be a positive integer, got {self.n_mothers!r}")
        if not _is_int(self.multiplicity) or self.multiplicity < 1:
            raise ConfigurationError(f"multiplicity must be a positive integer, got {self.multiplicity!r}")
        if not _is_int(self.max_iterations) or self.max_iterations < 0:
            raise ConfigurationError(
                f"max_iterations must be a non-negative integer, got {self.max_iterations!r}"
            )
        if not _is_int(self.seed) or self.seed < 0:
            raise ConfigurationError(f"seed must be an unsigned integer, got {self.seed!r}")
        for name in ("d_root", "d_runner"):
            d = np.asarray(getattr(self, name), dtype=float)
            if d.ndim > 1 or d.size == 0:
                raise ConfigurationError(f"{name} must be a scalar or a vector")
            if not np.all(np.isfinite(d)) or np.any(d <= 0):
                raise ConfigurationError(f"{name} must be strictly positive")
            object.__setattr__(self, name, float(d) if d.ndim == 0 else d)
        if not (math.isfinite(self.fitness_shift) and self.fitness_shift >= 0):
            raise ConfigurationError(f"fitness_shift must be >= 0, got {self.fitness_shift!r}")
        if self.fitness_mode not in ("abc", "ranking"):
            raise ConfigurationError(
                f"fitness_mode must be 'abc' or 'ranking', got {self.fitness_mode!r}"
            )
        if self.roulette_pool not in ("full", "remainder"):
            raise ConfigurationError(
                f"roulette_pool must be 'full' or 'remainder', got {self.roulette_pool!r}"
            )
        if not 1.0 <= self.selection_pressure <= 2.0:
            raise ConfigurationError(
                f"selection_pressure must lie in [1, 2], got {self.selection_pressure!r}"
            )
        if self.target_value is not None and math.isnan(self.target_value):
            raise ConfigurationError("target_value must not be NaN")

    @property
    def batch_size(self) -> int:
        return 2 * self.multiplicity * self.n_mothers

    def radii(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        """Root and runner lengths broadcast to ``(dim,)``."""
        out = []
        for name in ("d_root", "d_runner"):
            d = np.asarray(getattr(self, name), dtype=float)
            if d.ndim == 1 and d.size != dim:
                raise ConfigurationError(f"{name} has length {d.size}, expected {dim}")
            out.append(np.broadcast_to(d, (dim,)).copy())
        return out[0], out[1]

    def check_against(self, bounds: Bounds) -> None:
        self.radii(bounds.dim)


def _is_int(value) -> bool:
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


@dataclass
class Population:
    positions: np.ndarray
    bounds: Bounds

    @property
    def size(self) -> int:
        return self.positions.shape[1]


@dataclass
class OffspringBatch:
    """Roots first, then runners; ``origin`` maps each column to its mother."""

    positions: np.ndarray
    origin: np.ndarray
    kind: np.ndarray
    bounds: Bounds
    values: Optional[np.ndarray] = None
    fitness: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    min: float
    mean: float
    max: float
    incumbent: float
    incumbent_position: np.ndarray
    evaluations: int


@dataclass
class RunTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def append(self, record: IterationRecord) -> None:
        self.records.append(record)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def incumbent(self) -> float:
        return self.records[-1].incumbent if self.records else math.inf

    @property
    def incumbent_position(self) -> Optional[np.ndarray]:
        return self.records[-1].incumbent_position if self.records else None

    @property
    def evaluations(self) -> int:
        return self.records[-1].evaluations if self.records else 0


@dataclass
class RunResult:
    x: np.ndarray
    value: float
    trace: RunTrace


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def init_population(bounds: Bounds, params: SbaParams, rng: np.random.Generator) -> Population:
    """Sample ``N`` mothers uniformly in the box."""
    params.check_against(bounds)
    u = rng.random((bounds.dim, params.n_mothers))
    span = (bounds.upper - bounds.lower)[:, None]
    positions = bounds.lower[:, None] + u * span
    # Rounding in lower + u*span can land one ulp past upper.
    return Population(bounds.clip(positions), bounds)


def place_offspring(
    mothers: np.ndarray,
    d_root: np.ndarray,
    d_runner: np.ndarray,
    r1: np.ndarray,
    r2: np.ndarray,
    bounds: Bounds,
) -> np.ndarray:
    """Roots ``mothers + d_root * r1`` and runners ``mothers + d_runner * r2``,
    clamped to the box.

    ``r1`` and ``r2`` must have the shape of ``mothers`` tiled ``multiplicity``
    times along the columns.
    """
    reps = r1.shape[1] // mothers.shape[1]
    tiled = np.tile(mothers, (1, reps))
    roots = tiled + np.asarray(d_root, dtype=float).reshape(-1, 1) * r1
    runners = tiled + np.asarray(d_runner, dtype=float).reshape(-1, 1) * r2
    return bounds.clip(np.hstack([roots, runners]))


def propagate(pop: Population, params: SbaParams, rng: np.random.Generator) -> OffspringBatch:
    m, n = pop.positions.shape
    if n != params.n_mothers:
        raise ConfigurationError(f"population has {n} mothers, expected {params.n_mothers}")
    d_root, d_runner = params.radii(m)
    width = params.multiplicity * n
    r1 = rng.random((m, width)) - 0.5
    r2 = rng.random((m, width)) - 0.5
    positions = place_offspring(pop.positions, d_root, d_runner, r1, r2, pop.bounds)
    origin = np.tile(np.arange(n), 2 * params.multiplicity)
    kind = np.repeat(np.array([ROOT, RUNNER]), width)
    return OffspringBatch(positions, origin, kind, pop.bounds)


def abc_fitness(value, shift: float = 0.0):
    """ABC-style fitness: ``1/(shift + f)`` for ``f > 0``, else ``shift + |f|``.

    Works on scalars and arrays. Non-finite objective values get fitness 0.
    """
    if shift < 0:
        raise ConfigurationError("fitness shift must be non-negative")
    v = np.asarray(value, dtype=float)
    out = np.zeros_like(v)
    finite = np.isfinite(v)
    pos = finite & (v > 0)
    with np.errstate(divide="ignore", over="ignore"):
        out[pos] = np.minimum(1.0 / (shift + v[pos]), FITNESS_CAP)
    nonpos = finite & ~pos
    out[nonpos] = shift + np.abs(v[nonpos])
    return float(out) if out.ndim == 0 else out


def rank_fitness(pos: int, total: int, sp: float) -> float:
    """Linear ranking fitness; position 1 is the worst, ``total`` the best."""
    if not 1 <= pos <= total:
        raise ValueError(f"rank position {pos} outside [1, {total}]")
    if not 1.0 <= sp <= 2.0:
        raise ValueError(f"selection pressure {sp} outside [1, 2]")
    if total == 1:
        return 1.0
    return 2.0 - sp + 2.0 * (sp - 1.0) * (pos - 1) / (total - 1)


def batch_fitness(values: np.ndarray, params: SbaParams) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if params.fitness_mode == "abc":
        return abc_fitness(values, params.fitness_shift)
    finite = np.isfinite(values)
    keyed = np.where(finite, values, np.inf)
    # Descending order so the worst lands at position 1; stable on ties.
    order = np.argsort(-keyed, kind="stable")
    fit = np.empty(values.size)
    total = values.size
    for rank, j in enumerate(order, start=1):
        fit[j] = rank_fitness(rank, total, params.selection_pressure)
    fit[~finite] = 0.0
    return fit


def selection_probabilities(fitness) -> np.ndarray:
    """Roulette probabilities ``fit_j / sum(fit)``; uniform if all are zero."""
    fit = np.asarray(fitness, dtype=float)
    if fit.ndim != 1 or fit.size == 0:
        raise ValueError("fitness must be a non-empty vector")
    if np.any(fit < 0) or not np.all(np.isfinite(fit)):
        raise ValueError("fitness values must be finite and non-negative")
    total = fit.sum()
    if total <= 0:
        return np.full(fit.size, 1.0 / fit.size)
    p = fit / total
    return p / p.sum()


def spin_roulette(fitness, rng: np.random.Generator, size: Optional[int] = None):
    """Fitness-proportional draw(s) with replacement; returns column indices."""
    p = selection_probabilities(fitness)
    return rng.choice(p.size, size=size, p=p)


def survivor_indices(batch: OffspringBatch, params: SbaParams, rng: np.random.Generator) -> np.ndarray:
    """Columns of ``batch`` that become the next mothers, elites first.

    The ``ceil(N/2)`` lowest objective values are kept (stable on ties). The
    remaining ``floor(N/2)`` come from the roulette wheel, see
    ``SbaParams.roulette_pool``.
    """
    n = params.n_mothers
    if batch.values is None or batch.fitness is None:
        raise ValueError("batch must be evaluated before selection")
    if batch.size < n:
        raise ValueError(f"batch has {batch.size} columns, need at least {n}")
    keyed = np.where(np.isfinite(batch.values), batch.values, np.inf)
    order = np.argsort(keyed, kind="stable")
    n_elite = (n + 1) // 2
    elite = order[:n_elite]
    if params.roulette_pool == "full":
        drawn = spin_roulette(batch.fitness, rng, n - n_elite)
        return np.concatenate([elite, drawn]).astype(int)
    chosen = list(elite)
    pool = np.sort(order[n_elite:])
    for _ in range(n - n_elite):
        k = spin_roulette(batch.fitness[pool], rng)
        chosen.append(pool[k])
        pool = np.delete(pool, k)
    return np.array(chosen, dtype=int)


def select_survivors(batch: OffspringBatch, params: SbaParams, rng: np.random.Generator) -> Population:
    idx = survivor_indices(batch, params, rng)
    return Population(batch.positions[:, idx].copy(), batch.bounds)


def step(
    pop: Population,
    objective: Objective,
    params: SbaParams,
    rng: np.random.Generator,
    trace: RunTrace,
) -> Population:
    """One duplication-elimination cycle; appends a record to ``trace``."""
    batch = propagate(pop, params, rng)
    values = np.array([_evaluate(objective, batch.positions[:, j]) for j in range(batch.size)])
    batch.values = values
    batch.fitness = batch_fitness(values, params)

    finite = np.isfinite(values)
    best_value, best_pos = trace.incumbent, trace.incumbent_position
    if finite.any():
        lo, mean, hi = values[finite].min(), values[finite].mean(), values[finite].max()
        j = int(np.argmin(np.where(finite, values, np.inf)))
        if values[j] < best_value:
            best_value, best_pos = float(values[j]), batch.positions[:, j].copy()
    else:
        lo = mean = hi = math.nan
    if best_pos is None:
        best_pos = np.full(pop.positions.shape[0], math.nan)

    trace.append(
        IterationRecord(
            iteration=len(trace) + 1,
            min=float(lo),
            mean=float(mean),
            max=float(hi),
            incumbent=float(best_value),
            incumbent_position=best_pos,
            evaluations=trace.evaluations + batch.size,
        )
    )
    return select_survivors(batch, params, rng)


def _evaluate(objective, x):
    try:
        v = float(objective(x))
    except (OverflowError, ZeroDivisionError, FloatingPointError):
        return math.nan
    return v if math.isfinite(v) else math.nan


def run(objective: Objective, bounds: Bounds, params: SbaParams) -> RunResult:
    """Minimise ``objective`` over ``bounds``.

    Stops after ``params.max_iterations`` iterations or as soon as the
    incumbent reaches ``params.target_value``.
    """
    if params.max_iterations == 0:
        raise EmptyRunError()
    params.check_against(bounds)
    rng = make_rng(params.seed)
    pop = init_population(bounds, params, rng)
    trace = RunTrace()
    for _ in range(params.max_iterations):
        pop = step(pop, objective, params, rng, trace)
        if params.target_value is not None and trace.incumbent <= params.target_value:
            break
    return RunResult(trace.incumbent_position, trace.incumbent, trace)
