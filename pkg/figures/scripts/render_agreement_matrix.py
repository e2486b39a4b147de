#!/usr/bin/env python3
"""Heatmap of pairwise agreement (or any long-form square matrix)."""

import sys

from _common import base_parser, run


def main(argv=None) -> int:
    p = base_parser(__doc__)
    p.add_argument("--in", dest="matrix", required=True, help="agreement.csv or ever_correct.csv")
    p.add_argument("--row-col", default="actor_a")
    p.add_argument("--col-col", default="actor_b")
    p.add_argument("--value-col", default="agreement")
    p.add_argument("--title", default="Final-prediction agreement")
    args = p.parse_args(argv)
    opts = {
        "row_col": args.row_col,
        "col_col": args.col_col,
        "value_col": args.value_col,
        "title": args.title,
    }
    return run("agreement_matrix", {"matrix": args.matrix}, opts, args.out)


if __name__ == "__main__":
    sys.exit(main())
