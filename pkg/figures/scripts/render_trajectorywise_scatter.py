#!/usr/bin/env python3
"""Trajectory-wise PCA scatter: one point per sampled graph."""

import sys

from _common import base_parser, run


def main(argv=None) -> int:
    p = base_parser(__doc__)
    p.add_argument("--in", dest="coords", required=True, help="trajwise_coords.csv")
    p.add_argument("--color-by", default=None, help="optional column for point colors")
    args = p.parse_args(argv)
    opts = {"color_by": args.color_by} if args.color_by else {}
    return run("trajectorywise_scatter", {"coords": args.coords}, opts, args.out)


if __name__ == "__main__":
    sys.exit(main())
