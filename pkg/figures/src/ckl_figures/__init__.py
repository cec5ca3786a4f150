"""Figure rendering for the loss lab's CSV outputs."""

from .render import SCHEMAS, FigureSpec, SchemaError, read_rows, render

__version__ = "0.1.0"
