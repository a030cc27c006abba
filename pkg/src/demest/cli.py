"""Batch CLI: run or validate experiment configs.

Exit codes: 0 success, 1 configuration/usage error, 2 estimator or runtime
failure.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import EXPERIMENT_KINDS, load_config_file
from .errors import ConfigError, DataFormatError, DivergenceError, \
    ObserverDesignError
from .harness import run_experiment


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demest",
        description="State and input estimation experiments for LTI systems "
                    "under colored noise.",
    )
    sub = parser.add_subparsers(dest="command")
    run_p = sub.add_parser("run", help="run an experiment config")
    run_p.add_argument("config", help="path to a JSON experiment config")
    val_p = sub.add_parser("validate", help="validate a config without running")
    val_p.add_argument("config", help="path to a JSON experiment config")
    sub.add_parser("list-experiments", help="list experiment kinds")
    sub.add_parser("version", help="print the package version")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; the contract here is 1.
        return 0 if exc.code in (0, None) else 1

    if args.command is None:
        parser.print_usage()
        return 1
    if args.command == "version":
        print(__version__)
        return 0
    if args.command == "list-experiments":
        for kind in EXPERIMENT_KINDS:
            print(kind)
        return 0

    try:
        cfg = load_config_file(args.config)
    except (ConfigError, DataFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    if args.command == "validate":
        print(f"ok: {args.config} ({cfg.kind})")
        return 0

    try:
        report = run_experiment(cfg)
    except (ConfigError, DataFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (DivergenceError, ObserverDesignError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 2

    print(f"{cfg.kind}: wrote {len(report.files())} files to "
          f"{report.output_dir} (config {report.config_hash})")
    if report.passed is not None:
        print(f"check: {'PASS' if report.passed else 'FAIL'}")
    if report.diverged:
        print(f"diverged runs: {len(report.diverged)} (see manifest.json)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
