#!/usr/bin/env python3
"""Run the built-in phase1 campaign (attack box + lone target server)."""

import argparse
import sys

from diamlab.campaign import render_report, run_campaign
from diamlab.config import load_config


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default="phase1-out")
    args = parser.parse_args()

    config = load_config("phase1", seed_override=args.seed)
    run = run_campaign(config, out_dir=args.out)
    print(render_report(run.report, "text"))
    print(f"report written to {run.out_dir}")
    return 2 if run.findings else 0


if __name__ == "__main__":
    sys.exit(main())
