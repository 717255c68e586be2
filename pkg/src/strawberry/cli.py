"""Command-line entry point.

    strawberry optimize CONFIG [--workers K]
    strawberry benchmark NAME [--dim D] [--iters T] [--runs R] [--seed S] ...
    strawberry synthesize CONFIG [--restarts R] [--iters T] [--workers K]

Exit status: 0 on success, 1 on usage or validation errors, 2 on runtime
or numerical errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from .core import ConfigurationError
from .harness import ConfigError, load_config, parse_config, run_experiment
from .objectives import REGISTRY

log = logging.getLogger("strawberry")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

# Radii and population size used for each benchmark when not overridden.
BENCHMARK_DEFAULTS = {
    "rastrigin": dict(n_mothers=5, d_root=0.2, d_runner=2.5, max_iterations=100),
    "griewank": dict(n_mothers=5, d_root=10.0, d_runner=400.0, max_iterations=1000),
    "sphere": dict(n_mothers=5, d_root=0.2, d_runner=2.5, max_iterations=100),
}

SYNTHESIS_DEFAULTS = dict(n_mothers=50, d_root=1e8, d_runner=1e10, fitness_shift=0.0, max_iterations=200)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _common(p):
    p.add_argument("--workers", type=int, default=1, help="parallel repetitions (output is identical for any value)")
    p.add_argument("--timing", action="store_true", help="record wall-clock seconds in the summary")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="strawberry", description="Strawberry algorithm experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("optimize", help="run an experiment described by a JSON config")
    p.add_argument("config")
    _common(p)

    p = sub.add_parser("benchmark", help="run a registry benchmark with flag overrides")
    p.add_argument("name")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--iters", type=int)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0, help="base seed; run r uses seed + r")
    p.add_argument("--n-mothers", type=int)
    p.add_argument("--d-root", type=float)
    p.add_argument("--d-runner", type=float)
    p.add_argument("--multiplicity", type=int)
    p.add_argument("--fitness-mode", choices=["abc", "ranking"])
    p.add_argument("--selection-pressure", type=float)
    p.add_argument("--roulette-pool", choices=["full", "remainder"])
    p.add_argument("--target", type=float)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--trace")
    p.add_argument("--summary")
    p.add_argument("--per-run")
    _common(p)

    p = sub.add_parser("synthesize", help="mixed-sensitivity controller synthesis")
    p.add_argument("config")
    p.add_argument("--restarts", type=int, help="independent seeded runs; the best is reported")
    p.add_argument("--iters", type=int)
    _common(p)
    return parser


def _benchmark_config(args):
    if args.name not in REGISTRY:
        raise ConfigError("objective.name", f"unknown objective {args.name!r} (known: {', '.join(sorted(REGISTRY))})")
    sba = dict(BENCHMARK_DEFAULTS[args.name])
    overrides = {
        "max_iterations": args.iters, "n_mothers": args.n_mothers, "d_root": args.d_root,
        "d_runner": args.d_runner, "multiplicity": args.multiplicity,
        "fitness_mode": args.fitness_mode, "selection_pressure": args.selection_pressure,
        "roulette_pool": args.roulette_pool,
        "target_value": args.target,
    }
    sba.update({k: v for k, v in overrides.items() if v is not None})
    stem = os.path.join(args.out_dir, f"{args.name}{args.dim}")
    doc = {
        "objective": {"name": args.name, "dimension": args.dim},
        "sba": sba,
        "repetitions": args.runs,
        "base_seed": args.seed,
        "output": {
            "trace": args.trace or stem + "_trace.csv",
            "summary": args.summary or stem + "_summary.json",
            "extremes": stem + "_extremes.csv",
            "timing": args.timing,
        },
    }
    if args.per_run:
        doc["output"]["per_run"] = args.per_run
    return parse_config(doc)


def _with_timing(config, args):
    if args.timing and not config.output.timing:
        config = replace(config, output=replace(config.output, timing=True))
    return config


def _synthesis_config(args):
    config = load_config(args.config, sba_defaults=SYNTHESIS_DEFAULTS)
    if config.synthesis is None:
        raise ConfigError("synthesis", "synthesize requires a 'synthesis' block")
    if args.restarts is not None:
        if args.restarts < 1:
            raise ConfigError("restarts", "must be a positive integer")
        config = replace(config, repetitions=args.restarts)
    if args.iters is not None:
        config = replace(config, sba=replace(config.sba, max_iterations=args.iters))
    return config


def _report(result, stream):
    s = result.summary
    print(f"best value {s['best_value']:.6g} (run {s['best_run']}, seed {s['best_seed']})", file=stream)
    print(f"median final {s['median_final']:.6g}, mean final {s['mean_final']:.6g}, "
          f"evaluations {s['total_evaluations']}", file=stream)
    if "controller" in s:
        c = s["controller"]
        print(f"gamma {s['gamma']:.6g}, rightmost pole real part {s['g']:.6g}", file=stream)
        print("controller " + " ".join(f"{k}={c[k]:.6g}" for k in ("a0", "a1", "a2", "b0", "b1", "b2")), file=stream)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "optimize":
            config = load_config(args.config)
        elif args.command == "benchmark":
            config = _benchmark_config(args)
        else:
            config = _synthesis_config(args)
        config = _with_timing(config, args)
        if args.workers < 1:
            raise ConfigError("workers", "must be a positive integer")
        log.info("running %d repetition(s)", config.repetitions)
        result = run_experiment(config, workers=args.workers)
    except (ConfigurationError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        # A missing config file is a usage problem; a missing output dir is I/O.
        if args.command != "benchmark" and exc.filename == getattr(args, "config", None):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _report(result, sys.stdout)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
