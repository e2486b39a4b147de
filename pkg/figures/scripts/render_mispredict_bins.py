#!/usr/bin/env python3
"""Misprediction rate binned by true and by predicted distance."""

import sys

from _common import base_parser, run


def main(argv=None) -> int:
    p = base_parser(__doc__)
    p.add_argument("--in", dest="bins", required=True, help="mispredict_bins.csv")
    p.add_argument("--p", type=float, default=None, help="filter to one density when the CSV has a p column")
    args = p.parse_args(argv)
    return run("mispredict_bins", {"bins": args.bins}, {"p": args.p}, args.out)


if __name__ == "__main__":
    sys.exit(main())
