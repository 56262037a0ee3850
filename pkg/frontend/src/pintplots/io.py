"""Loading and validation of the solver's CSV artifacts.

The column lists and schema tags below mirror the writer's contract.
Every data row carries the schema tag in its first column; a file whose
header or tags disagree is refused with SchemaMismatch naming the
offending column, because silently plotting a half-understood table is
worse than no figure.
"""

from pathlib import Path

import pandas as pd

METRICS_SCHEMA = "metrics-v1"
SUMMARY_SCHEMA = "summary-v1"
FILL_SCHEMA = "fill-v1"

METRICS_COLUMNS = (
    "schema", "run_id", "system", "algorithm", "k", "i",
    "ES", "VS", "MAD", "MSE", "Bias", "stddev_max", "L",
    "wall_ms", "termination",
)
SUMMARY_COLUMNS = (
    "schema", "run_id", "group", "kind", "system", "algorithm", "seed",
    "K_end", "K_conv", "termination",
    "ES", "VS", "MAD", "MSE", "Bias", "wall_s",
)
FILL_COLUMNS = ("schema", "run_id", "alpha", "k", "fill_distance")


class SchemaMismatch(ValueError):
    """An input CSV does not match the supported table schema."""


def _load(path, schema, columns):
    path = Path(path)
    df = pd.read_csv(path)
    for col in columns:
        if col not in df.columns:
            raise SchemaMismatch(f"{path}: missing column {col!r}")
    if len(df) and not (df["schema"] == schema).all():
        found = df.loc[df["schema"] != schema, "schema"].iloc[0]
        raise SchemaMismatch(
            f"{path}: column 'schema': expected {schema!r}, found {found!r}"
        )
    return df


def read_metrics(paths):
    """One DataFrame per metrics file, in input order."""
    return [_load(p, METRICS_SCHEMA, METRICS_COLUMNS) for p in paths]


def read_summary(path):
    return _load(path, SUMMARY_SCHEMA, SUMMARY_COLUMNS)


def read_fill(paths):
    return [_load(p, FILL_SCHEMA, FILL_COLUMNS) for p in paths]
