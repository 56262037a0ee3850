import csv
from pathlib import Path

import pytest

from pintplots import io

DATA = Path(__file__).parent / "data"


def write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns))
        w.writeheader()
        w.writerows(rows)


def metrics_row(**over):
    row = {
        "schema": io.METRICS_SCHEMA, "run_id": "toy-run", "system": "toy",
        "algorithm": "prob-gparareal", "k": 0, "i": 1,
        "ES": 0.5, "VS": 0.4, "MAD": 0.3, "MSE": 0.2, "Bias": 0.1,
        "stddev_max": 0.05, "L": 0, "wall_ms": 0.0, "termination": "converged",
    }
    row.update(over)
    return row


@pytest.fixture
def metrics_csv(tmp_path):
    """Two iterations over four intervals of a toy run."""
    rows = [
        metrics_row(k=k, i=i, stddev_max=0.1 / (k + 1) / i,
                    Bias=0.01 * (-1) ** i / (k + 1))
        for k in range(3)
        for i in range(1, 5)
    ]
    path = tmp_path / "metrics_toy.csv"
    write_rows(path, io.METRICS_COLUMNS, rows)
    return path


@pytest.fixture
def fill_csv(tmp_path):
    rows = [
        {"schema": io.FILL_SCHEMA, "run_id": "toy-run", "alpha": a,
         "k": k, "fill_distance": 0.5 / (10 ** k)}
        for a in (0.5, 0.9)
        for k in (1, 2, 3)
    ]
    path = tmp_path / "fill_toy.csv"
    write_rows(path, io.FILL_COLUMNS, rows)
    return path
