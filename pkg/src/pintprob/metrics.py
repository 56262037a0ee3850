"""Forecast quality scores for ensemble solver output.

All scores compare an ensemble of n states (rows of a (n, d) array)
against one verifying state, here the sequential fine-solver trajectory.
Conventions:

* energy_score: mean distance to truth minus half the mean pairwise
  distance, Euclidean norms.  Proper; 0 only for a point mass on truth.
* variogram_score: sum over all ordered coordinate pairs (including the
  diagonal, which contributes zero) of the squared gap between the
  ensemble-mean absolute increment |u(s1) - u(s2)|^p and the verifying
  increment, with p = 0.5 and unit weights by default.
* mad_score: per coordinate, the distance from truth to the empirical
  central 95% interval [2.5%, 97.5% quantiles, linear interpolation],
  zero when truth falls inside; averaged over coordinates.  Calibrated
  ensembles score exactly zero.
* mse: mean squared Euclidean distance of the members to truth.
* bias: Euclidean norm of (ensemble mean - truth).

Run-level evaluation averages each score over mesh knots 1..N; knot 0 is
the (shared) initial condition and is excluded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from pintprob.core import SizeMismatch

__all__ = [
    "energy_score",
    "variogram_score",
    "mad_score",
    "mse",
    "bias",
    "ForecastEval",
    "evaluate_ensemble",
    "evaluate_run",
]


def _check(samples, truth):
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if samples.shape[1] != truth.shape[0]:
        raise SizeMismatch(
            f"ensemble dim {samples.shape[1]} != truth dim {truth.shape[0]}"
        )
    return samples, truth


def energy_score(samples, truth):
    samples, truth = _check(samples, truth)
    n = samples.shape[0]
    to_truth = np.linalg.norm(samples - truth, axis=1).mean()
    if n == 1:
        return float(to_truth)
    # pdist gives each unordered pair once; the double sum over ordered
    # pairs is twice that, and the diagonal is zero.
    pair_sum = 2.0 * pdist(samples).sum()
    return float(to_truth - pair_sum / (2.0 * n * n))


def variogram_score(samples, truth, p=0.5, weights=None):
    samples, truth = _check(samples, truth)
    d = truth.shape[0]
    if weights is None:
        W = np.ones((d, d))
    else:
        W = np.asarray(weights, dtype=np.float64)
        if W.shape != (d, d):
            raise SizeMismatch(f"weights must be ({d}, {d})")
    # |u(s1) - u(s2)|^p averaged over members, all ordered pairs at once.
    diffs = np.abs(samples[:, :, None] - samples[:, None, :]) ** p
    ens = diffs.mean(axis=0)
    ver = np.abs(truth[:, None] - truth[None, :]) ** p
    return float((W * (ens - ver) ** 2).sum())


def mad_score(samples, truth):
    samples, truth = _check(samples, truth)
    lo = np.quantile(samples, 0.025, axis=0)
    hi = np.quantile(samples, 0.975, axis=0)
    exceed = np.maximum(truth - hi, 0.0) + np.maximum(lo - truth, 0.0)
    return float(exceed.mean())


def mse(samples, truth):
    samples, truth = _check(samples, truth)
    return float(((samples - truth) ** 2).sum(axis=1).mean())


def bias(samples, truth):
    samples, truth = _check(samples, truth)
    return float(np.linalg.norm(samples.mean(axis=0) - truth))


@dataclass(frozen=True)
class ForecastEval:
    """One row of scores; either a single knot or a time average."""

    es: float
    vs: float
    mad: float
    mse: float
    bias: float

    def as_dict(self):
        return {
            "ES": self.es,
            "VS": self.vs,
            "MAD": self.mad,
            "MSE": self.mse,
            "Bias": self.bias,
        }


def evaluate_ensemble(samples, truth) -> ForecastEval:
    return ForecastEval(
        es=energy_score(samples, truth),
        vs=variogram_score(samples, truth),
        mad=mad_score(samples, truth),
        mse=mse(samples, truth),
        bias=bias(samples, truth),
    )


def evaluate_run(ensembles, truth_trajectory) -> ForecastEval:
    """Average the scores over knots 1..N.

    ``ensembles`` is a sequence of (n_i, d) arrays indexed by knot 0..N;
    entry 0 is ignored (it is the initial condition).  The truth
    trajectory has shape (N+1, d).
    """
    truth_trajectory = np.asarray(truth_trajectory, dtype=np.float64)
    if len(ensembles) != truth_trajectory.shape[0]:
        raise SizeMismatch(
            f"{len(ensembles)} ensembles vs {truth_trajectory.shape[0]} knots"
        )
    if len(ensembles) < 2:
        raise SizeMismatch("need at least one knot past the initial condition")
    rows = [
        evaluate_ensemble(ens, truth_trajectory[i])
        for i, ens in enumerate(ensembles)
        if i >= 1
    ]
    return ForecastEval(
        es=float(np.mean([r.es for r in rows])),
        vs=float(np.mean([r.vs for r in rows])),
        mad=float(np.mean([r.mad for r in rows])),
        mse=float(np.mean([r.mse for r in rows])),
        bias=float(np.mean([r.bias for r in rows])),
    )
