"""``spinorflow`` command line: ``run`` a configured flow or ``verify`` an acceptance suite."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import config as config_mod
from .io import ContainerError, write_json
from .runner import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_VERIFY_FAILED, execute

LOG_ENV = "SPINORFLOW_LOG_LEVEL"


def _setup_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    from .verification import SUITES

    p = argparse.ArgumentParser(prog="spinorflow", description="Spinor flow laboratory on periodic lattices.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="integrate a configured run")
    r.add_argument("--config", required=True, help="key = value run configuration file")
    r.add_argument("--seed", type=int, help="override the seed of the configuration")
    r.add_argument("--output", help="output directory (default: output_dir from the config)")
    r.add_argument("--resume", help="checkpoint to continue from")
    v = sub.add_parser("verify", help="run an acceptance suite")
    v.add_argument("--suite", required=True, choices=sorted(SUITES))
    v.add_argument("--output", help="write the JSON report here instead of stdout")
    return p


def cmd_run(args) -> int:
    try:
        cfg = config_mod.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
    except config_mod.ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code, summary = execute(cfg, args.output, args.resume)
    except config_mod.ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ContainerError) as err:
        print(f"error: I/O failure: {err}", file=sys.stderr)
        return EXIT_IO
    if summary["halted"]:
        print(f"halted: {summary['halted']} at step {summary['step_final']}", file=sys.stderr)
    return code


def cmd_verify(args) -> int:
    from .verification import run_suite

    results = run_suite(args.suite)
    for r in results:
        print(r.line(), file=sys.stderr)
    report = {"suite": args.suite, "passed": all(r.passed for r in results), "checks": [r.to_dict() for r in results]}
    try:
        if args.output:
            write_json(Path(args.output), report)
        else:
            print(json.dumps(report, indent=2, sort_keys=True, default=float))
    except OSError as err:
        print(f"error: I/O failure: {err}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if report["passed"] else EXIT_VERIFY_FAILED


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    return cmd_verify(args)


if __name__ == "__main__":
    sys.exit(main())
