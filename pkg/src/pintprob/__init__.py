"""Parallel-in-time solvers with Gaussian-process corrections.

Deterministic drivers (parareal, gparareal) live in :mod:`pintprob.pint`;
the ensemble-propagating probabilistic driver lives in
:mod:`pintprob.probpint`.  Benchmark systems, integrators, GP regression,
forecast scoring, and the experiment CLI fill out the rest.
"""

__version__ = "0.1.0"

from pintprob.core import (
    CorrectionDataset,
    Ensemble,
    IllConditioned,
    NonFiniteState,
    RunConfig,
    RunRecord,
    SizeMismatch,
    TimeMesh,
    make_rng_stream,
)

__all__ = [
    "CorrectionDataset",
    "Ensemble",
    "IllConditioned",
    "NonFiniteState",
    "RunConfig",
    "RunRecord",
    "SizeMismatch",
    "TimeMesh",
    "make_rng_stream",
    "__version__",
]
