"""Command-line entry point.

Subcommands: ``run`` (per-seed experiment with CSV/JSON outputs),
``sweep-speedup`` (iterations-to-threshold table over I or B),
``verify`` (oracle-consistency suite), ``gradcheck`` (reference gradient
vs central differences).  All subcommands read the same config format:
an INI-style file plus repeatable ``--set section.key=value`` overrides,
with overrides winning.
"""

from __future__ import annotations

import argparse
import sys

from ..errors import ConfigError, ParameterError
from .config import parse_config
from .runner import run_experiment, run_gradcheck, run_verify, sweep_speedup


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", "-c", default=None,
                   help="path to an INI-style config file")
    p.add_argument("--set", "-s", dest="overrides", action="append",
                   default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config value (repeatable; wins over "
                        "the file)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="blockbilevel",
        description="Blockwise variance-reduced multi-block bilevel solvers")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured experiment over "
                                       "all seeds")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep-speedup",
                             help="sweep I or B and report median "
                                  "iterations to a gradient-norm threshold")
    _add_common(p_sweep)
    p_sweep.add_argument("--sweep", choices=("I", "B"), required=True)
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated sweep values, e.g. 1,2,5,10")
    p_sweep.add_argument("--threshold", type=float, default=0.05)
    p_sweep.add_argument("--check-every", type=int, default=25)

    p_verify = sub.add_parser("verify", help="run the oracle-consistency "
                                             "suite on the configured problem")
    _add_common(p_verify)

    p_grad = sub.add_parser("gradcheck",
                            help="compare the reference gradient against "
                                 "finite differences")
    _add_common(p_grad)
    p_grad.add_argument("--points", type=int, default=5)
    p_grad.add_argument("--h", type=float, default=1e-5)
    p_grad.add_argument("--rtol", type=float, default=1e-4)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = parse_config(args.config, args.overrides)
        if args.command == "run":
            return run_experiment(config)
        if args.command == "sweep-speedup":
            values = [int(tok) for tok in args.values.split(",")]
            result = sweep_speedup(config, args.sweep, values,
                                   threshold=args.threshold,
                                   check_every=args.check_every)
            return 0 if result["nonincreasing_within_mad"] else 1
        if args.command == "verify":
            return run_verify(config)
        if args.command == "gradcheck":
            return run_gradcheck(config, n_points=args.points, h=args.h,
                                 rtol=args.rtol)
        raise AssertionError(args.command)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
