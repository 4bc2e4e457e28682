"""Command line entry point: ``equiheat <kind> --config <path> [--out <dir>] [--seed N]``.

Exit codes: 0 all checks pass, 1 a tolerance check fails, 2 invalid
configuration, 3 numerical failure.  ``EQUIHEAT_THREADS`` caps the BLAS and
OpenMP thread pools.
"""
from __future__ import annotations

import argparse
import os
import sys

KINDS = ("trace", "oscillatory", "gaussian-volume", "selberg", "bundle-heat", "probes")
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _limit_threads() -> None:
    n = os.environ.get("EQUIHEAT_THREADS")
    if n:
        # only effective before numpy loads its BLAS
        for var in THREAD_VARS:
            os.environ[var] = n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="equiheat", description="Run an equivariant heat trace experiment.")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", required=True, help="flat key = value config file")
    p.add_argument("--out", default=None, help="output directory (default: current directory)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _limit_threads()
    from .reports import ExperimentConfig, ValidationError, emit_report, run_experiment

    try:
        cfg = ExperimentConfig.from_file(args.config, args.kind)
        if args.seed is not None:
            cfg.seed = args.seed
    except ValidationError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_experiment(cfg)
    except (ArithmeticError, RuntimeError, ValueError, NotImplementedError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    paths = emit_report(report, args.out or ".", cfg.format, cfg.name)
    for c in report.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']} = {c['value']:.6g}")
    for path in paths:
        print(f"wrote {path}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
