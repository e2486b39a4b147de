"""Figure rendering for narlab experiment outputs."""

__version__ = "0.1.0"

from .render import FIGURE_KINDS, FigureSpec, render
from .schema import SchemaError, load_columns

__all__ = ["FIGURE_KINDS", "FigureSpec", "SchemaError", "load_columns", "render"]
