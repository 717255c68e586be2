"""Seeded repeated-run experiments: config parsing, execution, aggregation, output."""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np

from .control import (
    ControllerParams,
    PenalizedCost,
    RationalTF,
    SynthesisProblem,
    evaluate_controller,
    frequency_grid,
)
from .core import Bounds, ConfigurationError, RunResult, SbaParams, run
from .objectives import REGISTRY, get_benchmark

__all__ = [
    "ConfigError",
    "ObjectiveConfig",
    "SynthesisConfig",
    "OutputConfig",
    "ExperimentConfig",
    "AggregateTrace",
    "ExperimentResult",
    "TRACE_HEADER",
    "load_config",
    "parse_config",
    "aggregate",
    "run_experiment",
    "format_float",
]

TRACE_HEADER = ("iter", "min", "mean", "max", "incumbent", "evals")
EXTREMES_HEADER = ("iter", "min_across_runs", "max_across_runs")
PER_RUN_HEADER = ("run", "seed") + TRACE_HEADER


class ConfigError(ConfigurationError):
    """Invalid experiment configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class ObjectiveConfig:
    name: str
    dimension: int
    lower: Optional[Any] = None
    upper: Optional[Any] = None

    def build(self):
        spec = get_benchmark(self.name, self.dimension)
        bounds = spec.bounds
        if self.lower is not None or self.upper is not None:
            lo = self.lower if self.lower is not None else spec.bounds.lower
            hi = self.upper if self.upper is not None else spec.bounds.upper
            bounds = Bounds(np.broadcast_to(np.asarray(lo, float), (self.dimension,)),
                            np.broadcast_to(np.asarray(hi, float), (self.dimension,)))
        return spec.function, bounds


@dataclass(frozen=True)
class SynthesisConfig:
    plant_num: tuple = (1000.0,)
    plant_den: tuple = (0.1, 1.0, 0.0)
    wp_num: tuple = (0.2, 1.0)
    wp_den: tuple = (1.0, 0.001)
    wi_num: tuple = (0.2,)
    wi_den: tuple = (1.0,)
    penalty: float = 1e5
    grid_min: float = 1e-4
    grid_max: float = 1e6
    grid_points: int = 2000
    cost_form: str = "sum"
    bound: float = 1e10

    def problem(self) -> SynthesisProblem:
        return SynthesisProblem(
            plant=RationalTF(self.plant_num, self.plant_den),
            perf_weight=RationalTF(self.wp_num, self.wp_den),
            uncert_weight=RationalTF(self.wi_num, self.wi_den),
            penalty=self.penalty,
            frequency_grid=frequency_grid(self.grid_min, self.grid_max, self.grid_points),
            cost_form=self.cost_form,
        )

    def build(self):
        return PenalizedCost(self.problem()), Bounds.uniform(-self.bound, self.bound, 6)


@dataclass(frozen=True)
class OutputConfig:
    trace: Optional[str] = None
    summary: Optional[str] = None
    per_run: Optional[str] = None
    extremes: Optional[str] = None
    timing: bool = False

    def paths(self):
        return [p for p in (self.trace, self.summary, self.per_run, self.extremes) if p]


@dataclass(frozen=True)
class ExperimentConfig:
    sba: SbaParams
    objective: Optional[ObjectiveConfig] = None
    synthesis: Optional[SynthesisConfig] = None
    repetitions: int = 1
    base_seed: int = 0
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        if (self.objective is None) == (self.synthesis is None):
            raise ConfigError("objective", "exactly one of 'objective' or 'synthesis' is required")
        if not isinstance(self.repetitions, int) or self.repetitions < 1:
            raise ConfigError("repetitions", f"must be a positive integer, got {self.repetitions!r}")
        if not isinstance(self.base_seed, int) or self.base_seed < 0:
            raise ConfigError("base_seed", f"must be an unsigned integer, got {self.base_seed!r}")

    def seed_for(self, r: int) -> int:
        return self.base_seed + r

    def build(self):
        return (self.objective or self.synthesis).build()

    def to_dict(self) -> dict:
        sba = {
            k: _jsonable(getattr(self.sba, k))
            for k in ("n_mothers", "d_root", "d_runner", "fitness_shift", "fitness_mode",
                      "selection_pressure", "multiplicity", "roulette_pool", "max_iterations",
                      "target_value")
        }
        out = {"sba": sba, "repetitions": self.repetitions, "base_seed": self.base_seed}
        if self.objective is not None:
            obj = {"name": self.objective.name, "dimension": self.objective.dimension}
            if self.objective.lower is not None or self.objective.upper is not None:
                _, b = self.objective.build()
                obj["bounds"] = {"lower": b.lower.tolist(), "upper": b.upper.tolist()}
            out["objective"] = obj
        else:
            s = self.synthesis
            out["synthesis"] = {
                "plant_num": list(s.plant_num), "plant_den": list(s.plant_den),
                "wp_num": list(s.wp_num), "wp_den": list(s.wp_den),
                "wi_num": list(s.wi_num), "wi_den": list(s.wi_den),
                "lambda": s.penalty,
                "grid": {"min": s.grid_min, "max": s.grid_max, "points": s.grid_points},
                "cost_form": s.cost_form, "bound": s.bound,
            }
        return out


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    return v


# -- parsing -----------------------------------------------------------------

_SBA_KEYS = {
    "n_mothers", "d_root", "d_runner", "fitness_shift", "fitness_mode",
    "selection_pressure", "multiplicity", "roulette_pool", "max_iterations", "target_value",
}
_SYNTH_KEYS = {
    "plant_num", "plant_den", "wp_num", "wp_den", "wi_num", "wi_den",
    "lambda", "grid", "cost_form", "bound",
}
_TOP_KEYS = {"objective", "synthesis", "sba", "repetitions", "base_seed", "output"}
_OUTPUT_KEYS = {"trace", "summary", "per_run", "extremes", "timing"}


def _check_keys(block: dict, allowed: set, where: str):
    if not isinstance(block, dict):
        raise ConfigError(where, "must be a mapping")
    for key in block:
        if key not in allowed:
            name = f"{where}.{key}" if where else key
            raise ConfigError(name, "unknown field")


def _coeffs(block, key, default):
    if key not in block:
        return default
    v = block[key]
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    try:
        arr = tuple(float(c) for c in v)
    except (TypeError, ValueError):
        raise ConfigError(f"synthesis.{key}", "must be a list of numbers") from None
    if not arr:
        raise ConfigError(f"synthesis.{key}", "must not be empty")
    return arr


def parse_config(doc: dict, sba_defaults: Optional[dict] = None) -> ExperimentConfig:
    """Build an ExperimentConfig from a JSON-like tree."""
    _check_keys(doc, _TOP_KEYS, "")

    objective = synthesis = None
    if "objective" in doc:
        block = doc["objective"]
        _check_keys(block, {"name", "dimension", "bounds"}, "objective")
        name = block.get("name")
        if name not in REGISTRY:
            raise ConfigError("objective.name", f"unknown objective {name!r}")
        dim = block.get("dimension")
        if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
            raise ConfigError("objective.dimension", f"must be a positive integer, got {dim!r}")
        lower = upper = None
        if "bounds" in block:
            _check_keys(block["bounds"], {"lower", "upper"}, "objective.bounds")
            lower, upper = block["bounds"].get("lower"), block["bounds"].get("upper")
        objective = ObjectiveConfig(name, dim, lower, upper)
        try:
            objective.build()
        except (ValueError, TypeError) as exc:
            raise ConfigError("objective.bounds", str(exc)) from None

    if "synthesis" in doc:
        block = doc["synthesis"]
        _check_keys(block, _SYNTH_KEYS, "synthesis")
        d = SynthesisConfig()
        grid = block.get("grid", {})
        _check_keys(grid, {"min", "max", "points"}, "synthesis.grid")
        synthesis = SynthesisConfig(
            plant_num=_coeffs(block, "plant_num", d.plant_num),
            plant_den=_coeffs(block, "plant_den", d.plant_den),
            wp_num=_coeffs(block, "wp_num", d.wp_num),
            wp_den=_coeffs(block, "wp_den", d.wp_den),
            wi_num=_coeffs(block, "wi_num", d.wi_num),
            wi_den=_coeffs(block, "wi_den", d.wi_den),
            penalty=_number(block, "lambda", d.penalty, "synthesis.lambda"),
            grid_min=_number(grid, "min", d.grid_min, "synthesis.grid.min"),
            grid_max=_number(grid, "max", d.grid_max, "synthesis.grid.max"),
            grid_points=int(_number(grid, "points", d.grid_points, "synthesis.grid.points")),
            cost_form=block.get("cost_form", d.cost_form),
            bound=_number(block, "bound", d.bound, "synthesis.bound"),
        )
        try:
            synthesis.problem()
        except (ValueError, ArithmeticError) as exc:
            raise ConfigError("synthesis", str(exc)) from None

    sba_block = dict(sba_defaults or {})
    raw_sba = doc.get("sba", {})
    _check_keys(raw_sba, _SBA_KEYS, "sba")
    sba_block.update(raw_sba)
    for required in ("n_mothers", "d_root", "d_runner"):
        if required not in sba_block:
            raise ConfigError(f"sba.{required}", "missing")
    try:
        sba = SbaParams(**sba_block)
    except ConfigurationError as exc:
        key = str(exc).split(" ", 1)[0]
        raise ConfigError(f"sba.{key}" if key in _SBA_KEYS else "sba", str(exc)) from None
    except TypeError as exc:
        raise ConfigError("sba", str(exc)) from None

    out_block = doc.get("output", {})
    _check_keys(out_block, _OUTPUT_KEYS, "output")
    output = OutputConfig(**out_block)

    return ExperimentConfig(
        sba=sba,
        objective=objective,
        synthesis=synthesis,
        repetitions=doc.get("repetitions", 1),
        base_seed=doc.get("base_seed", 0),
        output=output,
    )


def _number(block, key, default, where):
    v = block.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(where, f"must be a number, got {v!r}")
    return v


def load_config(path, sba_defaults=None) -> ExperimentConfig:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(str(path), f"invalid JSON ({exc})") from None
    return parse_config(doc, sba_defaults)


# -- execution ---------------------------------------------------------------


def _run_repetition(args) -> RunResult:
    config, r = args
    objective, bounds = config.build()
    params = replace(config.sba, seed=config.seed_for(r))
    return run(objective, bounds, params)


@dataclass
class AggregateTrace:
    """Per-iteration means across repetitions plus cross-run extremes."""

    iteration: np.ndarray
    min: np.ndarray
    mean: np.ndarray
    max: np.ndarray
    incumbent: np.ndarray
    evaluations: np.ndarray
    min_across_runs: np.ndarray
    max_across_runs: np.ndarray
    final_incumbents: np.ndarray

    def __len__(self):
        return self.iteration.size


def _padded(runs, name, length):
    # Runs stopped early by target_value carry their last record forward.
    rows = []
    for res in runs:
        col = res.trace.column(name).astype(float)
        rows.append(np.concatenate([col, np.full(length - col.size, col[-1])]))
    return np.vstack(rows)


def aggregate(runs) -> AggregateTrace:
    length = max(len(r.trace) for r in runs)
    mins = _padded(runs, "min", length)
    maxs = _padded(runs, "max", length)
    with np.errstate(invalid="ignore"):
        return AggregateTrace(
            iteration=np.arange(1, length + 1),
            min=mins.mean(axis=0),
            mean=_padded(runs, "mean", length).mean(axis=0),
            max=maxs.mean(axis=0),
            incumbent=_padded(runs, "incumbent", length).mean(axis=0),
            evaluations=_padded(runs, "evaluations", length).mean(axis=0),
            min_across_runs=mins.min(axis=0),
            max_across_runs=maxs.max(axis=0),
            final_incumbents=np.array([r.value for r in runs], dtype=float),
        )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list
    aggregate: AggregateTrace
    summary: dict


def format_float(v) -> str:
    return format(float(v), ".17g")


def _check_writable(paths):
    for p in paths:
        parent = os.path.dirname(os.path.abspath(p)) or "."
        if os.path.isdir(p):
            raise IsADirectoryError(f"output path {p!r} is a directory")
        if not os.path.isdir(parent):
            raise FileNotFoundError(f"output directory {parent!r} does not exist")
        target = p if os.path.exists(p) else parent
        if not os.access(target, os.W_OK):
            raise PermissionError(f"output path {p!r} is not writable")


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Run ``config.repetitions`` seeded runs and write the configured outputs.

    Results are joined in repetition order, so outputs do not depend on
    ``workers``.
    """
    _check_writable(config.output.paths())
    started = time.perf_counter()
    tasks = [(config, r) for r in range(config.repetitions)]
    if workers > 1 and config.repetitions > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_repetition, tasks))
    else:
        runs = [_run_repetition(t) for t in tasks]
    agg = aggregate(runs)
    summary = _summarize(config, runs)
    if config.output.timing:
        summary["wall_clock_seconds"] = time.perf_counter() - started
    _write_outputs(config, runs, agg, summary)
    return ExperimentResult(config, runs, agg, summary)


def _summarize(config, runs) -> dict:
    finals = np.array([r.value for r in runs], dtype=float)
    best = int(np.argmin(finals))
    summary = {
        "config": config.to_dict(),
        "best_run": best,
        "best_seed": config.seed_for(best),
        "best_value": float(finals[best]),
        "best_position": [float(v) for v in runs[best].x],
        "final_values": [float(v) for v in finals],
        "median_final": float(np.median(finals)),
        "mean_final": float(np.mean(finals)),
        "iterations": [len(r.trace) for r in runs],
        "total_evaluations": int(sum(r.trace.evaluations for r in runs)),
    }
    if config.synthesis is not None:
        controller = ControllerParams.from_vector(runs[best].x)
        report = evaluate_controller(config.synthesis.problem(), controller)
        k = controller.to_tf()
        summary["controller"] = {
            "a0": controller.a0, "a1": controller.a1, "a2": controller.a2,
            "b0": controller.b0, "b1": controller.b1, "b2": controller.b2,
            "numerator": k.numerator.tolist(),
            "denominator": k.denominator.tolist(),
        }
        summary["gamma"] = report.gamma
        summary["g"] = report.rightmost_pole
        summary["stable"] = report.stable
    return summary


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def trace_csv(agg: AggregateTrace) -> str:
    rows = (
        [int(agg.iteration[t])] + [format_float(c[t]) for c in (agg.min, agg.mean, agg.max, agg.incumbent, agg.evaluations)]
        for t in range(len(agg))
    )
    return _csv_text(TRACE_HEADER, rows)


def extremes_csv(agg: AggregateTrace) -> str:
    rows = (
        [int(agg.iteration[t]), format_float(agg.min_across_runs[t]), format_float(agg.max_across_runs[t])]
        for t in range(len(agg))
    )
    return _csv_text(EXTREMES_HEADER, rows)


def per_run_csv(config, runs) -> str:
    rows = []
    for r, res in enumerate(runs):
        for rec in res.trace:
            rows.append([r, config.seed_for(r), rec.iteration]
                        + [format_float(v) for v in (rec.min, rec.mean, rec.max, rec.incumbent, rec.evaluations)])
    return _csv_text(PER_RUN_HEADER, rows)


def summary_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=False) + "\n"


def _write(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_outputs(config, runs, agg, summary):
    out = config.output
    if out.trace:
        _write(out.trace, trace_csv(agg))
    if out.extremes:
        _write(out.extremes, extremes_csv(agg))
    if out.per_run:
        _write(out.per_run, per_run_csv(config, runs))
    if out.summary:
        _write(out.summary, summary_json(summary))
