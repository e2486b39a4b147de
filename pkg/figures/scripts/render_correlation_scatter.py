#!/usr/bin/env python3
"""Predicted vs true distance; correct nodes blue, mispredicts orange."""

import sys

from _common import base_parser, run


def main(argv=None) -> int:
    p = base_parser(__doc__)
    p.add_argument("--in", dest="pairs", required=True, help="distance_pairs.csv")
    args = p.parse_args(argv)
    return run("correlation_scatter", {"pairs": args.pairs}, {}, args.out)


if __name__ == "__main__":
    sys.exit(main())
