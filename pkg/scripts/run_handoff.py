#!/usr/bin/env python3
"""Run the default end-to-end handoff scenario and dump its outputs."""

import argparse

from aerobridge.config import default_config, load_config
from aerobridge.scenario import run_scenario


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="scenario config file (defaults built in)")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default="out/handoff")
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg.run.seed = args.seed
    report = run_scenario(cfg)
    report.write(args.out)
    print(report.summary_json(), end="")
    print(f"outputs in {args.out}/")


if __name__ == "__main__":
    main()
