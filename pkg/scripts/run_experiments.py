#!/usr/bin/env python3
"""Run the trajectory, CMP-accuracy, and protocol experiments in one go."""

import argparse
import json

from aerobridge.config import default_config, load_config
from aerobridge.experiments import (
    experiment_cmp_accuracy,
    experiment_protocol_check,
    experiment_trajectories,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="scenario config file")
    ap.add_argument("--trajectory-iterations", type=int, default=None)
    ap.add_argument("--cmp-iterations", type=int, default=None)
    ap.add_argument("--loss-budget", type=int, default=2)
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else default_config()

    print("== trajectory displacement ==")
    rep = experiment_trajectories(cfg, iterations=args.trajectory_iterations)
    print(json.dumps(rep.to_dict(), indent=1, sort_keys=True))

    print("== CMP localization accuracy ==")
    cmp_rep = experiment_cmp_accuracy(cfg, iterations=args.cmp_iterations)
    print(json.dumps(cmp_rep.to_dict(), indent=1, sort_keys=True))

    print("== protocol interleaving check ==")
    check = experiment_protocol_check(cfg, loss_budget=args.loss_budget)
    print(json.dumps(check.summary(), indent=1, sort_keys=True))


if __name__ == "__main__":
    main()
