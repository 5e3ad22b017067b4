#!/usr/bin/env python3
"""End-to-end run: train base, train refiner, evaluate, plot.

Usage: python scripts/run_pipeline.py --config configs/smoke.yaml
Artifacts land in the config's out_dir.
"""

import argparse
import sys

from flowrefine import cli
from flowrefine.config import load_config


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", required=True)
    parser.add_argument("--set", dest="overrides", action="append", default=[])
    args = parser.parse_args()
    cfg = load_config(args.config, args.overrides)

    print("training base generator ...")
    cli.cmd_train_base(cfg)
    print("training refiner ...")
    cli.cmd_train_refiner(cfg)
    print("evaluating ...")
    path = cli.cmd_evaluate(cfg)
    print(f"metrics written to {path}")
    print(f"scatter written to {cli.cmd_plot(cfg)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
