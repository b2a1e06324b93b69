#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import argparse
import os
import sys

sys.path.insert(0, os.path.abspath(os.path.dirname(__file__)))

from cli.interface import COMMANDS, EXIT_USAGE, ExperimentRunner, setup_logging
from utils.config import load_settings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collapse-lab",
        description="Covariant quantum channels: momentum diffusion checks and experiments")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="experiment config (JSON); defaults to the last one recorded for the command")
    parser.add_argument("--out", help="output directory (overrides config output.dir)")
    parser.add_argument("--seed", type=int, help="random seed (overrides config run.seed)")
    parser.add_argument("--tol", type=float, help="classification tolerance (overrides config run.tolerance)")
    parser.add_argument("--settings", help="settings.ini path")
    parser.add_argument("--history", help="run history database path")
    parser.add_argument("--no-history", action="store_true", help="do not record the run")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else 0

    settings = load_settings(args.settings)
    setup_logging(settings.log_dir, args.verbose)
    runner = ExperimentRunner(settings, history_path=args.history, use_history=not args.no_history)
    config = args.config or runner.last_config(args.command)
    if config is None:
        parser.print_usage(sys.stderr)
        print(f"collapse-lab: no --config given and no recorded {args.command} run", file=sys.stderr)
        return EXIT_USAGE
    return runner.run(args.command, config, args.out, args.seed, args.tol)


if __name__ == "__main__":
    sys.exit(main())
