"""Dataset-coverage diagnostics for the GP emulator.

The local fill distance around a query state u' is

    h(u') = sup_{z in B(u', rho)} min_x ||z - x||,

the worst gap to the correction dataset over a ball around u', where rho
is the smallest radius at which the ball contains at least one
observation (the distance to the nearest one).  Posterior variance decays
with this quantity, so tracking it across iterations shows the emulator's
coverage catching up with the states it is queried at.

The supremum is estimated from a deterministic probe set: the ball center,
the point at radius rho directly away from the nearest observation (exact
for a one-point dataset: h = dist + rho), and a low-discrepancy (Sobol)
cloud filling the ball.  No randomness, so repeated calls agree bit for
bit.

Representatives of an ensemble are picked on the boundary of its highest
density region: fit a diagonal Gaussian, take the Mahalanobis shell at
the chi-square quantile of the requested mass, and return the two members
nearest the shell from inside and outside.  Coordinates with zero spread
carry no Mahalanobis information and are dropped; a fully degenerate
ensemble (all spreads zero) warns and returns the mean twice.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import chi2, norm, qmc

from pintprob.core import SizeMismatch

__all__ = [
    "DegenerateEnsemble",
    "local_fill_distance",
    "hdr_representatives",
    "fill_distance_sweep",
]


class DegenerateEnsemble(RuntimeWarning):
    """All coordinates of the ensemble have zero spread."""


def _ball_probes(center, rho, n_probes):
    """Deterministic low-discrepancy points filling B(center, rho)."""
    d = center.shape[0]
    # One extra Sobol coordinate drives the radial profile; directions come
    # from inverse-normal-transformed coordinates, normalized.
    u = qmc.Sobol(d + 1, scramble=False).random(n_probes)
    u = np.clip(u, 2.0**-32, 1.0 - 2.0**-32)
    dirs = norm.ppf(u[:, :d])
    norms = np.linalg.norm(dirs, axis=1)
    norms[norms == 0.0] = 1.0
    dirs /= norms[:, None]
    dirs[np.linalg.norm(dirs, axis=1) == 0.0, 0] = 1.0
    radii = rho * u[:, d] ** (1.0 / d)
    return center + radii[:, None] * dirs


def local_fill_distance(X, center, n_probes=64):
    """Estimated local fill distance of dataset rows X around `center`."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    center = np.asarray(center, dtype=np.float64).reshape(-1)
    if X.shape[1] != center.shape[0]:
        raise SizeMismatch(
            f"dataset dim {X.shape[1]} != center dim {center.shape[0]}"
        )
    gaps = cdist(X, center[None, :]).ravel()
    near = int(np.argmin(gaps))
    rho = float(gaps[near])
    if rho == 0.0:
        return 0.0
    away = center - X[near]
    probes = [center[None, :], (center + rho * away / rho)[None, :]]
    if n_probes > 0:
        probes.append(_ball_probes(center, rho, n_probes))
    P = np.vstack(probes)
    return float(cdist(P, X).min(axis=1).max())


def hdr_representatives(samples, alpha):
    """Two ensemble members nearest the alpha-HDR boundary.

    Fits a diagonal Gaussian and measures Mahalanobis distance over the
    coordinates with nonzero spread; the boundary is the chi-square
    quantile of alpha at the effective dimension.  Returns a (2, d) array:
    nearest member inside the region, then nearest outside.  If every
    member falls on one side, the overall two nearest to the boundary are
    returned instead.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    mean = samples.mean(axis=0)
    sd = (
        samples.std(axis=0, ddof=1)
        if samples.shape[0] > 1
        else np.zeros(samples.shape[1])
    )
    live = sd > 0.0
    if not live.any():
        warnings.warn(
            "ensemble has zero spread in every coordinate",
            DegenerateEnsemble,
            stacklevel=2,
        )
        return np.stack([mean, mean])
    z2 = (((samples[:, live] - mean[live]) / sd[live]) ** 2).sum(axis=1)
    thresh = chi2.ppf(alpha, int(live.sum()))
    inside = np.flatnonzero(z2 <= thresh)
    outside = np.flatnonzero(z2 > thresh)
    if len(inside) == 0 or len(outside) == 0:
        order = np.argsort(np.abs(z2 - thresh), kind="stable")
        pick = (
            order[:2]
            if len(order) >= 2
            else np.array([order[0], order[0]])
        )
        return samples[pick]
    best_in = inside[np.argmax(z2[inside])]
    best_out = outside[np.argmin(z2[outside])]
    return samples[[best_in, best_out]]


def fill_distance_sweep(record, alphas=(0.5, 0.9), n_probes=64):
    """Mean local fill distance per iteration, evaluated where it matters.

    For each iteration k >= 1 of a run record, take the dataset as it
    stood after that iteration, pick the HDR-boundary representatives of
    every knot ensemble past the initial condition, and average their
    local fill distances.  Returns {alpha: {k: mean fill distance}}.
    """
    if record.dataset is None:
        raise ValueError("record has no correction dataset")
    out = {float(a): {} for a in alphas}
    for rec in record.iterations:
        if rec.k < 1:
            continue
        if rec.ensembles is None:
            continue
        X = record.dataset.up_to_iteration(rec.k).inputs
        if X.shape[0] == 0:
            continue
        for a in alphas:
            vals = []
            for i, ens in enumerate(rec.ensembles):
                if i == 0:
                    continue
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", DegenerateEnsemble)
                    reps = hdr_representatives(ens, a)
                for rep in reps:
                    vals.append(local_fill_distance(X, rep, n_probes))
            out[float(a)][rec.k] = float(np.mean(vals))
    return out
