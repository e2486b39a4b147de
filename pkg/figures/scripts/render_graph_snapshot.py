#!/usr/bin/env python3
"""Node-link diagram of one execution step with tree-membership edge colors:
green = true tree and predicted, blue = true tree only, red = predicted only,
black = neither."""

import sys

from _common import base_parser, run


def main(argv=None) -> int:
    p = base_parser(__doc__)
    p.add_argument("--edges", required=True, help="snapshot_edges.csv")
    p.add_argument("--nodes", required=True, help="snapshot_nodes.csv")
    p.add_argument("--step", type=int, default=0)
    args = p.parse_args(argv)
    return run(
        "graph_snapshot",
        {"edges": args.edges, "nodes": args.nodes},
        {"step": args.step},
        args.out,
    )


if __name__ == "__main__":
    sys.exit(main())
