"""Figure rendering for the capacity CLI's CSV outputs."""

from .figures import (
    SCHEMAS,
    FigureSpec,
    NoDataError,
    PlotError,
    SchemaError,
    build_figure,
    read_table,
    render,
)

__version__ = "0.1.0"
