"""Command-line front end: run experiments, compute reference optima,
and re-plot stored records.

Exit codes: 0 success, 2 configuration problems, 3 numerical failures.
"""

from __future__ import annotations

import os

# single-threaded numerics keep runs reproducible across machines; set
# before the first BLAS call, overridable by the environment
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import json
import sys

import numpy as np

from .benchmarks import cached_robust_reference, list_problems, make_problem
from .errors import ConfigError, NumericalError
from .runner import (RunConfig, aggregate_and_plot, load_run_record, run_all)

__all__ = ["main"]

_RUN_OVERRIDES = [
    ("problem", str), ("acquisition", str), ("iterations", int),
    ("repetitions", int), ("initial_design", int), ("base_seed", int),
    ("num_samples", int), ("num_features", int), ("beta_sqrt", float),
    ("hyper_policy", str), ("reference_grid", int), ("out_dir", str),
    ("outer_restarts", int), ("inner_restarts", int),
]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustbo",
        description="Robust Bayesian optimization against an adversary: "
                    "entropy-based and baseline acquisitions on synthetic "
                    "benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a configured experiment")
    run.add_argument("--config", help="JSON file with RunConfig keys")
    for name, typ in _RUN_OVERRIDES:
        run.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None,
                         dest=name)

    ref = sub.add_parser("reference",
                         help="compute a problem's robust reference optimum")
    ref.add_argument("--problem", required=True,
                     help=f"one of: {', '.join(list_problems())}")
    ref.add_argument("--grid", type=int, default=400)
    ref.add_argument("--seed", type=int, default=0,
                     help="instance seed for within_model")
    ref.add_argument("--cache", default=None,
                     help="versioned JSON cache file to reuse and update")

    plot = sub.add_parser("plot", help="aggregate stored run records")
    plot.add_argument("--in-dir", required=True, dest="in_dir")
    plot.add_argument("--out-dir", default=None, dest="out_dir")
    return parser


def _cmd_run(args) -> int:
    raw = {}
    if args.config is not None:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
    for name, _typ in _RUN_OVERRIDES:
        value = getattr(args, name)
        if value is not None:
            raw[name] = value
    config = RunConfig.from_dict(raw)
    records = run_all(config)
    paths = aggregate_and_plot(records, config.out_dir)
    for p in paths:
        print(p)
    return 0


def _cmd_reference(args) -> int:
    problem = make_problem(args.problem, rng_seed=args.seed)
    f_star, x_star, theta_star = cached_robust_reference(problem, args.grid,
                                                         args.cache)
    print(json.dumps({"problem": problem.name, "grid": args.grid,
                      "f_star": float(f_star),
                      "x_star": list(np.ravel(x_star)),
                      "theta_star": list(np.ravel(theta_star))}, indent=1))
    return 0


def _cmd_plot(args) -> int:
    in_dir = args.in_dir
    names = sorted(n for n in os.listdir(in_dir)
                   if n.startswith("run_") and n.endswith(".json"))
    if not names:
        raise ConfigError(f"no run_*.json records in {in_dir}")
    records = [load_run_record(os.path.join(in_dir, n)) for n in names]
    out_dir = args.out_dir or in_dir
    for p in aggregate_and_plot(records, out_dir):
        print(p)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "reference":
            return _cmd_reference(args)
        return _cmd_plot(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
