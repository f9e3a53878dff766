"""Reproduce both simulation tables and print the ratio summaries.

Desk scale (1e6 paths per cell) takes a couple of minutes on one core;
``--paper-scale`` uses 1e7 paths.
"""

import argparse
import sys

from ruinsim.cli import main as cli


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="results")
    p.add_argument("--paper-scale", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()
    extra = ["--out", args.out, "--workers", str(args.workers)]
    if args.paper_scale:
        extra.append("--paper-scale")
    for table in ("table5.1", "table5.2"):
        code = cli(["reproduce", table, *extra])
        if code:
            sys.exit(code)


if __name__ == "__main__":
    main()
