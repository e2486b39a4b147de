#!/usr/bin/env python3
"""Symmetry-cluster scatter with dominant directions overlaid in red."""

import sys

from _common import base_parser, run


def main(argv=None) -> int:
    p = base_parser(__doc__)
    p.add_argument("--in", dest="coords", required=True, help="stepwise_coords.csv with a cluster column")
    p.add_argument("--segments", default=None, help="overlay_segments.csv")
    args = p.parse_args(argv)
    inputs = {"coords": args.coords}
    if args.segments:
        inputs["segments"] = args.segments
    return run("cluster_overlay", inputs, {}, args.out)


if __name__ == "__main__":
    sys.exit(main())
