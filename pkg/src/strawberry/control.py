"""Fixed-structure mixed-sensitivity controller synthesis.

SISO loop with plant ``G``, controller ``K``, performance weight ``w_p`` and
input-uncertainty weight ``w_I``. The controller is

    K(s) = (b2 s^2 + b1 s + b0) / (s^3 + a2 s^2 + a1 s + a0)

and the cost is the worst-case over a frequency grid of ``|w_p S| + |w_I T|``
(or its 2-norm variant) plus ``penalty * max(g, 0)`` where ``g`` is the real
part of the rightmost closed-loop pole.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Bounds, RunTrace, SbaParams, run

__all__ = [
    "INFEASIBLE_COST",
    "ControlError",
    "PoleOnGridError",
    "DegenerateProblemError",
    "RootFindingError",
    "RationalTF",
    "ControllerParams",
    "SynthesisProblem",
    "SynthesisResult",
    "frequency_grid",
    "tf_eval",
    "closed_loop_char_poly",
    "polynomial_roots",
    "rightmost_root_real_part",
    "weighted_sensitivities",
    "mixed_sensitivity_sum",
    "mixed_sensitivity_stacked",
    "bracket",
    "evaluate_controller",
    "penalized_cost",
    "PenalizedCost",
    "reference_problem",
    "reference_sba_params",
    "REFERENCE_CONTROLLER",
    "synthesize",
]

# Cost returned whenever the closed loop cannot be assessed numerically.
INFEASIBLE_COST = 1e30

_TINY = 1e-300


class ControlError(ArithmeticError):
    pass


class PoleOnGridError(ControlError):
    pass


class DegenerateProblemError(ControlError):
    pass


class RootFindingError(ControlError):
    pass


def _trim(coeffs) -> np.ndarray:
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if c.ndim != 1:
        raise ValueError("coefficients must be a vector")
    nz = np.flatnonzero(c)
    return c[nz[0]:] if nz.size else np.zeros(1)


@dataclass(frozen=True)
class RationalTF:
    """``numerator(s) / denominator(s)``, coefficients in descending powers."""

    numerator: np.ndarray
    denominator: np.ndarray

    def __post_init__(self):
        num, den = _trim(self.numerator), _trim(self.denominator)
        if den[0] == 0:
            raise ValueError("denominator must not be the zero polynomial")
        object.__setattr__(self, "numerator", num)
        object.__setattr__(self, "denominator", den)

    @classmethod
    def constant(cls, k: float) -> "RationalTF":
        return cls([k], [1.0])

    @property
    def is_proper(self) -> bool:
        return self.numerator.size <= self.denominator.size or not np.any(self.numerator)

    def __call__(self, omega):
        return tf_eval(self, omega)


def frequency_grid(w_min: float = 1e-4, w_max: float = 1e6, points: int = 2000) -> np.ndarray:
    """Logarithmically spaced frequencies in rad/s."""
    if not (0 < w_min < w_max) or points < 1:
        raise ValueError("frequency grid needs 0 < min < max and at least one point")
    return np.logspace(math.log10(w_min), math.log10(w_max), int(points))


def tf_eval(tf: RationalTF, omega):
    """Evaluate ``tf`` at ``s = j*omega`` (scalar or array of frequencies)."""
    s = 1j * np.asarray(omega, dtype=float)
    num = np.polyval(tf.numerator.astype(complex), s)
    den = np.polyval(tf.denominator.astype(complex), s)
    if np.any(np.abs(den) < _TINY):
        raise PoleOnGridError("transfer function has a pole on the evaluation grid")
    out = num / den
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ControllerParams:
    a0: float
    a1: float
    a2: float
    b0: float
    b1: float
    b2: float

    @classmethod
    def from_vector(cls, x) -> "ControllerParams":
        x = np.asarray(x, dtype=float).ravel()
        if x.size != 6:
            raise ValueError(f"controller vector needs 6 entries [a0 a1 a2 b0 b1 b2], got {x.size}")
        return cls(*map(float, x))

    def to_vector(self) -> np.ndarray:
        return np.array([self.a0, self.a1, self.a2, self.b0, self.b1, self.b2])

    def to_tf(self) -> RationalTF:
        return RationalTF([self.b2, self.b1, self.b0], [1.0, self.a2, self.a1, self.a0])


# The controller reported for the DC-motor problem.
REFERENCE_CONTROLLER = ControllerParams(
    a0=-8.6854e8, a1=5.0171e10, a2=2.2109e4, b0=1.9011e8, b1=5.5818e9, b2=9.8371e8
)


def closed_loop_char_poly(plant: RationalTF, controller: RationalTF) -> np.ndarray:
    """Numerator of ``1 + K G``: ``den_K den_G + num_K num_G``."""
    poly = np.polyadd(
        np.convolve(controller.denominator, plant.denominator),
        np.convolve(controller.numerator, plant.numerator),
    )
    poly = _trim(poly)
    if not np.any(poly):
        raise DegenerateProblemError("closed-loop characteristic polynomial is identically zero")
    return poly


def polynomial_roots(poly, polish_steps: int = 1) -> np.ndarray:
    """All complex roots of a real polynomial (descending coefficients).

    The polynomial is made monic, roots at the origin are split off, and the
    variable is rescaled so that the constant term has unit magnitude before
    taking companion-matrix eigenvalues. Newton steps then polish each root.
    """
    c = _trim(poly)
    if not np.all(np.isfinite(c)):
        raise RootFindingError("non-finite polynomial coefficients")
    if c.size < 2:
        raise ValueError("polynomial must have degree >= 1")
    nz = np.flatnonzero(c)
    zeros_at_origin = c.size - 1 - nz[-1]
    c = c[: nz[-1] + 1] / c[0]
    n = c.size - 1
    roots = [np.zeros(zeros_at_origin, dtype=complex)]
    if n > 0:
        scale = abs(c[-1]) ** (1.0 / n)
        z_coeffs = c * scale ** -np.arange(n + 1, dtype=float)
        if not np.all(np.isfinite(z_coeffs)):
            raise RootFindingError("coefficient scaling overflowed")
        companion = np.zeros((n, n))
        companion[0, :] = -z_coeffs[1:]
        companion[np.arange(1, n), np.arange(n - 1)] = 1.0
        try:
            z = np.linalg.eigvals(companion)
        except np.linalg.LinAlgError as exc:
            raise RootFindingError(str(exc)) from exc
        z = _newton_polish(z_coeffs, z, polish_steps)
        roots.append(z * scale)
    out = np.concatenate(roots)
    if not np.all(np.isfinite(out)):
        raise RootFindingError("root finder returned non-finite roots")
    return out


def _newton_polish(coeffs, z, steps):
    dcoeffs = np.polyder(coeffs)
    z = z.astype(complex)
    for _ in range(steps):
        p = np.polyval(coeffs, z)
        dp = np.polyval(dcoeffs, z)
        ok = np.abs(dp) > 0
        cand = z.copy()
        cand[ok] = z[ok] - p[ok] / dp[ok]
        better = np.abs(np.polyval(coeffs, cand)) < np.abs(p)
        z = np.where(better, cand, z)
    return z


def rightmost_root_real_part(poly) -> float:
    return float(np.max(polynomial_roots(poly).real))


@dataclass(frozen=True)
class SynthesisProblem:
    plant: RationalTF
    perf_weight: RationalTF
    uncert_weight: RationalTF
    penalty: float = 1e5
    frequency_grid: np.ndarray = field(default_factory=frequency_grid)
    cost_form: str = "sum"

    def __post_init__(self):
        grid = np.asarray(self.frequency_grid, dtype=float).ravel()
        if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
            raise ValueError("frequency grid must be positive and strictly increasing")
        if not (math.isfinite(self.penalty) and self.penalty >= 0):
            raise ValueError(f"penalty must be a non-negative real, got {self.penalty!r}")
        if self.cost_form not in ("sum", "stacked"):
            raise ValueError(f"cost_form must be 'sum' or 'stacked', got {self.cost_form!r}")
        for name in ("plant", "perf_weight", "uncert_weight"):
            if not getattr(self, name).is_proper:
                raise ValueError(f"{name} must be proper")
        object.__setattr__(self, "frequency_grid", grid)
        s = 1j * grid
        # Per-grid quantities that do not depend on the controller.
        object.__setattr__(self, "_s", s)
        object.__setattr__(self, "_num_g", np.polyval(self.plant.numerator, s))
        object.__setattr__(self, "_den_g", np.polyval(self.plant.denominator, s))
        object.__setattr__(self, "_wp", np.abs(tf_eval(self.perf_weight, grid)))
        object.__setattr__(self, "_wi", np.abs(tf_eval(self.uncert_weight, grid)))

    def with_(self, **changes) -> "SynthesisProblem":
        kw = dict(
            plant=self.plant,
            perf_weight=self.perf_weight,
            uncert_weight=self.uncert_weight,
            penalty=self.penalty,
            frequency_grid=self.frequency_grid,
            cost_form=self.cost_form,
        )
        kw.update(changes)
        return SynthesisProblem(**kw)


def reference_problem(**overrides) -> SynthesisProblem:
    """DC motor ``G = 1000/(0.1 s^2 + s)``, ``w_I = 0.2``, ``w_p = (0.2 s + 1)/(s + 0.001)``."""
    kw = dict(
        plant=RationalTF([1000.0], [0.1, 1.0, 0.0]),
        perf_weight=RationalTF([0.2, 1.0], [1.0, 0.001]),
        uncert_weight=RationalTF.constant(0.2),
    )
    kw.update(overrides)
    return SynthesisProblem(**kw)


def _as_tf(controller) -> RationalTF:
    if isinstance(controller, RationalTF):
        return controller
    if isinstance(controller, ControllerParams):
        return controller.to_tf()
    return ControllerParams.from_vector(controller).to_tf()


def weighted_sensitivities(problem: SynthesisProblem, controller):
    """``(|w_p S|, |w_I T|)`` on the problem's grid.

    ``S`` and ``T`` are formed from polynomial values so that poles of ``K``
    or ``G`` on the grid cancel. Raises PoleOnGridError if ``1 + K G``
    vanishes at a grid point.
    """
    k = _as_tf(controller)
    s = problem._s
    with np.errstate(over="ignore", invalid="ignore"):
        open_num = np.polyval(k.numerator, s) * problem._num_g
        open_den = np.polyval(k.denominator, s) * problem._den_g
        char = open_den + open_num
        mag = np.abs(char)
        if not np.all(np.isfinite(mag)) or np.any(mag < _TINY):
            raise PoleOnGridError("closed-loop pole on the frequency grid")
        ws = problem._wp * np.abs(open_den) / mag
        wt = problem._wi * np.abs(open_num) / mag
    return ws, wt


def mixed_sensitivity_sum(problem: SynthesisProblem, controller) -> float:
    """Grid maximum of ``|w_p S| + |w_I T|``."""
    try:
        ws, wt = weighted_sensitivities(problem, controller)
    except PoleOnGridError:
        return INFEASIBLE_COST
    return _finite_or_sentinel(np.max(ws + wt))


def mixed_sensitivity_stacked(problem: SynthesisProblem, controller) -> float:
    """Grid maximum of ``sqrt(|w_p S|^2 + |w_I T|^2)``."""
    try:
        ws, wt = weighted_sensitivities(problem, controller)
    except PoleOnGridError:
        return INFEASIBLE_COST
    return _finite_or_sentinel(np.max(np.hypot(ws, wt)))


def _finite_or_sentinel(v) -> float:
    v = float(v)
    return v if math.isfinite(v) else INFEASIBLE_COST


def bracket(g: float) -> float:
    return g if g >= 0 else 0.0


@dataclass(frozen=True)
class ControllerReport:
    cost: float
    gamma: float
    rightmost_pole: float

    @property
    def stable(self) -> bool:
        return self.rightmost_pole < 0


def evaluate_controller(problem: SynthesisProblem, x) -> ControllerReport:
    """Norm, rightmost pole real part, and penalised cost for one controller.

    Numerical failures never raise: they produce ``INFEASIBLE_COST``.
    """
    k = _as_tf(x)
    norm = mixed_sensitivity_sum if problem.cost_form == "sum" else mixed_sensitivity_stacked
    gamma = norm(problem, k)
    try:
        g = rightmost_root_real_part(closed_loop_char_poly(problem.plant, k))
    except ControlError:
        return ControllerReport(INFEASIBLE_COST, gamma, math.inf)
    if gamma >= INFEASIBLE_COST:
        return ControllerReport(INFEASIBLE_COST, gamma, g)
    cost = gamma + problem.penalty * bracket(g)
    return ControllerReport(_finite_or_sentinel(cost), gamma, g)


def penalized_cost(problem: SynthesisProblem, x) -> float:
    return evaluate_controller(problem, x).cost


class PenalizedCost:
    """Objective handle ``x -> penalized_cost(problem, x)``."""

    def __init__(self, problem: SynthesisProblem):
        self.problem = problem

    def __call__(self, x) -> float:
        return penalized_cost(self.problem, x)


def reference_sba_params(**overrides) -> SbaParams:
    kw = dict(n_mothers=50, d_root=1e8, d_runner=1e10, fitness_shift=0.0, max_iterations=200)
    kw.update(overrides)
    return SbaParams(**kw)


@dataclass
class SynthesisResult:
    controller: ControllerParams
    cost: float
    gamma: float
    rightmost_pole: float
    trace: RunTrace


def synthesize(
    problem: SynthesisProblem,
    sba: Optional[SbaParams] = None,
    bound: float = 1e10,
) -> SynthesisResult:
    """Minimise the penalised cost with SBA over ``[-bound, bound]^6``."""
    sba = sba if sba is not None else reference_sba_params()
    result = run(PenalizedCost(problem), Bounds.uniform(-bound, bound, 6), sba)
    controller = ControllerParams.from_vector(result.x)
    report = evaluate_controller(problem, controller)
    return SynthesisResult(controller, report.cost, report.gamma, report.rightmost_pole, result.trace)
