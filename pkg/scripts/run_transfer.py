#!/usr/bin/env python3
"""Refiner transfer: correct a weaker generator with refiners trained
against the full one.

Trains both generators and both refiners if their checkpoints are
missing, then writes transfer.csv with Base and 1/10-step refined rows.
"""

import argparse
import os
import sys

from flowrefine import cli
from flowrefine.config import load_config


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", required=True)
    parser.add_argument("--set", dest="overrides", action="append", default=[])
    args = parser.parse_args()
    cfg = load_config(args.config, args.overrides)

    def ensure(path, build, *build_args, **kwargs):
        full = os.path.join(cfg.out_dir, path)
        if os.path.exists(full):
            print(f"reusing {full}")
        else:
            build(cfg, *build_args, **kwargs)

    ensure("base.bfr", cli.cmd_train_base)
    ensure("base_degraded.bfr", cli.cmd_train_base, degraded=True)
    ensure("refiner_dfr.bfr", cli.cmd_train_refiner, "dfr")
    ensure("refiner_lfr.bfr", cli.cmd_train_refiner, "lfr")
    path = cli.cmd_transfer(cfg)
    print(f"transfer table written to {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
