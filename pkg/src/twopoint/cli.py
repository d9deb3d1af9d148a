"""Command line entry point.

    twopoint [--threads N] run <config>
    twopoint [--threads N] barrier check <config>
    twopoint [--threads N] barrier solve <config>
    twopoint version

The output directory is ``[output] dir`` unless ``TWOPOINT_OUTPUT_DIR`` is set.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, parse_config, peek_output_dir
from .errors import TwoPointError
from .runner import EXIT_CONFIG, OUTPUT_ENV, _write_error, output_dir, run_barrier, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twopoint", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=1, metavar="N",
                        help="worker threads for the pair loops (default 1)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run every check listed in the config")
    run.add_argument("config", type=Path)
    barrier = sub.add_parser("barrier", help="verify or export the configured barrier")
    barrier.add_argument("action", choices=("check", "solve"))
    barrier.add_argument("config", type=Path)
    sub.add_parser("version", help="print the package version")
    return parser


def _read(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        raise TwoPointError(f"cannot read {path}: {exc.strerror}") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "version":
        print(__version__)
        return 0
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    text = ""
    try:
        text = _read(args.config)
        cfg = parse_config(text)
    except TwoPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        out = output_dir(ExperimentConfig(), os.environ.get(OUTPUT_ENV) or peek_output_dir(text))
        _write_error(out, exc, exc.exit_code)
        return exc.exit_code
    if args.command == "run":
        code = run_experiment(cfg, threads=args.threads)
    else:
        code = run_barrier(cfg, args.action)
    if code:
        print(f"exit status {code}; see {output_dir(cfg)}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
