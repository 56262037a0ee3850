"""Static figures from solver artifact CSVs.

This package reads the versioned CSV tables the solver CLI writes
(metrics, summaries, coverage diagnostics) and renders the standard
figures.  It talks to the solver package only through those files.
"""

from pintplots.io import (
    FILL_SCHEMA,
    METRICS_SCHEMA,
    SUMMARY_SCHEMA,
    SchemaMismatch,
    read_fill,
    read_metrics,
    read_summary,
)
from pintplots.figures import KINDS, PlotSpec, build_figure, render

__all__ = [
    "FILL_SCHEMA",
    "METRICS_SCHEMA",
    "SUMMARY_SCHEMA",
    "SchemaMismatch",
    "read_fill",
    "read_metrics",
    "read_summary",
    "KINDS",
    "PlotSpec",
    "build_figure",
    "render",
]
