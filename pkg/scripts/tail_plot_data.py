"""Simulated ruin probability against the closed-form estimate on a log-spaced grid."""

import argparse
import csv
import sys
from dataclasses import replace

from ruinsim.cli import tail_plotdata
from ruinsim.config import load_config


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("config", nargs="?", default="table51", help="config file or preset name")
    p.add_argument("--points", type=int, default=8)
    p.add_argument("--reps", type=int, default=None)
    args = p.parse_args()
    cfg = load_config(args.config)
    if args.reps:
        cfg = replace(cfg, mc=replace(cfg.mc, replications=args.reps))
    rows, slope = tail_plotdata(cfg, points=args.points)
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]))
    w.writeheader()
    w.writerows(rows)
    print(f"# fitted log-log slope: {slope}", file=sys.stderr)


if __name__ == "__main__":
    main()
