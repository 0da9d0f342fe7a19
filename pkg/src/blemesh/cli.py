"""Command-line scenario runner.

    blemesh --scenario case3 --seed 7 --runs 20 --out results/

Flags override the matching ``[scenario]`` keys of ``--config``. Exit status
is 0 on success, 2 on a configuration error and 1 on an output error.
"""

from __future__ import annotations

import argparse
import sys

from . import config as cfgmod
from .config import ConfigError
from .scenario import run_many, write_outputs


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blemesh", description="Run a BLE mesh simulation scenario and write KPI CSVs.")
    p.add_argument("--config", metavar="PATH", help="scenario config file (INI)")
    p.add_argument("--scenario", choices=cfgmod.SCENARIOS, help="experiment to run (default: from config, else custom)")
    p.add_argument("--seed", type=int, help="first seed")
    p.add_argument("--runs", type=int, help="number of runs; the seed increments per run")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--dump-config", action="store_true", help="print the effective config and exit")
    return p


def resolve(args: argparse.Namespace) -> cfgmod.ScenarioConfig:
    if args.config:
        cfg = cfgmod.load(args.config)
        if args.scenario and args.scenario != cfg.scenario.name:
            # keep the file's settings but run a different experiment
            cfg = cfg.with_overrides(name=args.scenario)
    else:
        cfg = cfgmod.defaults(args.scenario or "custom")
    cfg = cfg.with_overrides(seed=args.seed, runs=args.runs, out=args.out)
    cfgmod.validate(cfg)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        if args.dump_config:
            sys.stdout.write(cfgmod.dumps(cfg))
            return 0
        results = run_many(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        paths = write_outputs(results, cfg.scenario.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
