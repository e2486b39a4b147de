"""CSV loading with column validation.

Renderers never compute analysis results; they only reshape columns emitted
by the experiment CLI. Missing columns or empty tables are hard errors so a
bad pipeline can't produce an empty image silently.
"""

from __future__ import annotations

import csv
from pathlib import Path


class SchemaError(ValueError):
    """Input file does not match the expected schema."""


def load_columns(path, required: list[str]) -> dict[str, list]:
    """Read a CSV into {column: values}, parsing numbers where possible."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input file not found: {path}")
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, no header row")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing required columns {missing}; found {reader.fieldnames}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    columns: dict[str, list] = {name: [] for name in reader.fieldnames}
    for row in rows:
        for name in reader.fieldnames:
            columns[name].append(_parse(row[name]))
    return columns


def _parse(text: str):
    if text is None:
        raise SchemaError("ragged row: missing value")
    t = text.strip()
    if t == "inf":
        return float("inf")
    try:
        return float(t)
    except ValueError:
        return t
