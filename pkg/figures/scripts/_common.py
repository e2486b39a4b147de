"""Shared scaffolding for the one-figure-per-script entry points."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

# allow running straight from a checkout without installing narlab-figures
sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from narfigs import FigureSpec, SchemaError, render  # noqa: E402


def run(kind: str, inputs: dict[str, str], options: dict, out: str) -> int:
    try:
        spec = FigureSpec(
            kind=kind,
            inputs={k: Path(v) for k, v in inputs.items()},
            output=Path(out),
            options=options,
        )
        path = render(spec)
    except SchemaError as e:
        print(f"schema error: {e}", file=sys.stderr)
        return 3
    print(path)
    return 0


def base_parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", required=True, help="output image (.png or .svg)")
    return p
