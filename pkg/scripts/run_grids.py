#!/usr/bin/env python3
"""Sweep every refiner knob on its default grid.

Produces ablate_sigma_d.csv, ablate_sigma_f.csv, ablate_alpha.csv and
ablate_nfe.csv in the config's out_dir; train the base generator first
(scripts/run_pipeline.py or `flowrefine train-base`).
"""

import argparse
import sys

from flowrefine import cli
from flowrefine.config import ABLATE_PARAMS, load_config


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", required=True)
    parser.add_argument("--set", dest="overrides", action="append", default=[])
    parser.add_argument(
        "--params", nargs="*", default=list(ABLATE_PARAMS),
        choices=ABLATE_PARAMS,
    )
    args = parser.parse_args()
    cfg = load_config(args.config, args.overrides)

    for param in args.params:
        print(f"sweeping {param} ...")
        path = cli.cmd_ablate(cfg, param=param)
        print(f"  -> {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
