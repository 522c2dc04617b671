"""Command-line scenario runner.

Usage:
    dpsra --experiment ps_vs_sparsity --trials 100 --seed 1 --out results/

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from .config import ScenarioConfig, config_from_mapping, load_config
from .exceptions import ConfigError
from .experiments import DEFAULT_TRIALS, REGISTRY, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpsra",
        description="Two-phase grant-free random access simulator: "
                    "runs a registered experiment and writes CSV curves "
                    "plus a manifest.")
    parser.add_argument("--experiment", required=True,
                        help=f"one of: {', '.join(sorted(REGISTRY))}")
    parser.add_argument("--config", default=None,
                        help="scenario file (key = value lines, # comments)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a scenario key (repeatable)")
    parser.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--parallelism", type=int, default=1)
    return parser


def resolve_config(args) -> ScenarioConfig:
    config = load_config(args.config) if args.config else ScenarioConfig()
    overrides = {}
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    if overrides:
        merged = config.to_mapping()
        merged.update(overrides)
        config = config_from_mapping(merged)
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
        if args.experiment not in REGISTRY:
            raise ConfigError(f"unknown experiment {args.experiment!r}; "
                              f"registered: {sorted(REGISTRY)}")
        if args.trials < 1:
            raise ConfigError("trials must be >= 1")
        if args.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_experiment(args.experiment, config, trials=args.trials,
                                seed=args.seed, out_dir=args.out,
                                parallelism=args.parallelism)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 3
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{result.name}: wrote {len(result.csv_paths)} CSV file(s) in "
          f"{result.wall_seconds:.1f}s; manifest at {result.manifest_path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
