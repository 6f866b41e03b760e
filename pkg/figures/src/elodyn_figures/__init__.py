"""Figure rendering for the Elo chain simulator's CSV artifacts."""

from .render import (FIGURE_KINDS, CsvTable, FigureSpec, SchemaError,
                     kscan_reference, read_table, render)

__version__ = "0.1.0"
