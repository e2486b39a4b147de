#!/usr/bin/env python3
"""Accuracy against oracle step count (or forced-step offset)."""

import sys

from _common import base_parser, run


def main(argv=None) -> int:
    p = base_parser(__doc__)
    p.add_argument("--in", dest="table", required=True, help="accuracy_vs_steps.csv or forced_steps.csv")
    p.add_argument("--x-col", default="steps", help="x column name (steps or delta)")
    args = p.parse_args(argv)
    return run("accuracy_vs_steps", {"table": args.table}, {"x_col": args.x_col}, args.out)


if __name__ == "__main__":
    sys.exit(main())
