#!/usr/bin/env python3
"""Step-wise PCA scatter: points colored by step, red trajectory lines."""

import sys

from _common import base_parser, run


def main(argv=None) -> int:
    p = base_parser(__doc__)
    p.add_argument("--in", dest="coords", required=True, help="stepwise_coords.csv")
    args = p.parse_args(argv)
    return run("stepwise_scatter", {"coords": args.coords}, {}, args.out)


if __name__ == "__main__":
    sys.exit(main())
