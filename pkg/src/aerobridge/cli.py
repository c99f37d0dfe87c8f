"""Command-line front end.

    aerobridge run --config scenario.cfg --seed 42 --out out/
    aerobridge experiment trajectories --out out/
    aerobridge experiment cmp --out out/
    aerobridge experiment protocol --out out/

Exit codes: 0 success, 1 aborted scenario, 2 config error, 3 property
violation from the protocol check.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, default_config, load_config
from .experiments import (
    experiment_cmp_accuracy,
    experiment_protocol_check,
    experiment_trajectories,
)
from .scenario import run_scenario

EXIT_OK = 0
EXIT_ABORTED = 1
EXIT_CONFIG = 2
EXIT_VIOLATION = 3


def _load(args) -> "ScenarioConfig":
    cfg = load_config(args.config) if args.config else default_config()
    if getattr(args, "seed", None) is not None:
        cfg.run.seed = args.seed
    return cfg


def _write_json(outdir: str | None, name: str, payload: dict) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if outdir:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
    sys.stdout.write(text)


def cmd_run(args) -> int:
    cfg = _load(args)
    report = run_scenario(cfg)
    if args.out:
        report.write(args.out, fmt=args.format)
    sys.stdout.write(report.summary_json())
    return EXIT_OK if report.summary["success"] else EXIT_ABORTED


def cmd_experiment(args) -> int:
    cfg = _load(args)
    if args.which == "trajectories":
        rep = experiment_trajectories(cfg, iterations=args.iterations,
                                      workers=args.workers)
        _write_json(args.out, "trajectories.json", rep.to_dict())
        return EXIT_OK if rep.ordering_ok else EXIT_VIOLATION
    if args.which == "cmp":
        rep = experiment_cmp_accuracy(cfg, iterations=args.iterations)
        _write_json(args.out, "cmp_accuracy.json", rep.to_dict())
        return EXIT_OK
    if args.which == "protocol":
        res = experiment_protocol_check(cfg, loss_budget=args.loss_budget,
                                        mutant=args.mutant)
        _write_json(args.out, "protocol_check.json", res.summary())
        return EXIT_OK if res.ok else EXIT_VIOLATION
    raise AssertionError(args.which)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aerobridge",
        description="Deterministic mid-air battery handoff simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one handoff scenario")
    run_p.add_argument("--config", help="scenario config file")
    run_p.add_argument("--seed", type=int, help="override run.seed")
    run_p.add_argument("--out", help="output directory")
    run_p.add_argument("--format", choices=("csv", "json"), default="csv")
    run_p.set_defaults(func=cmd_run)

    exp_p = sub.add_parser("experiment", help="run a reproduction experiment")
    exp_p.add_argument("which", choices=("trajectories", "cmp", "protocol"))
    exp_p.add_argument("--config", help="scenario config file")
    exp_p.add_argument("--seed", type=int, help="override run.seed")
    exp_p.add_argument("--out", help="output directory")
    exp_p.add_argument("--format", choices=("csv", "json"), default="json")
    exp_p.add_argument("--iterations", type=int, default=None)
    exp_p.add_argument("--workers", type=int, default=1)
    exp_p.add_argument("--loss-budget", type=int, default=None)
    exp_p.add_argument("--mutant", default=None,
                       help="protocol mutant name (for counterexample demos)")
    exp_p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
