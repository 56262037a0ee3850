"""Gaussian-process emulation of the coarse-solver correction.

One independent scalar GP per output coordinate, all sharing the same
input matrix X (normalized states at interval starts) and each regressing
one coordinate of the fine-minus-coarse correction.  Kernels are isotropic
with three hyperparameters theta = (sigma_i2, sigma_o2, sigma_reg2):
input scale, output scale, and the regularization added to the kernel
matrix diagonal.

The Gaussian kernel divides the squared distance by sigma_i2 directly:

    k(u, u') = sigma_o2 * exp(-||u - u'||^2 / sigma_i2)

Matern kernels use t = ||u - u'|| / sqrt(sigma_i2) in the usual closed
forms for nu in {1/2, 3/2, 5/2}.

Fitting maximizes the marginal log likelihood over a coarse candidate grid
(5 input scales around the median squared pairwise distance, 5 output
scales around var(y), 3 regularizations spanning the allowed band times
the output scale), then polishes by coordinate descent with shrinking
multiplicative steps.  A warm-start theta gets its own descent and the
better endpoint wins: warm starts track slowly moving optima across
solver iterations but must never lock the search out of a better basin
that opens up as the dataset grows.

sigma_reg2 is confined between a conditioning floor (1e-10 * sigma_o2)
and a noise budget ceiling relative to the data variance, and solver
loops taper that ceiling from the full variance at the first iteration
down to the jitter band (taper_ceiling).  The correction data comes from
exact deterministic solves, so asymptotically sigma_reg2 is
conditioning, not a noise model: the outer iteration only contracts once
the posterior mean reproduces observed corrections at their own inputs.
Left entirely free, the likelihood books unresolved curvature as noise
forever, and that smoothing floor stalls convergence above tolerance;
clamped to the jitter band from the start, sparse first-iteration
datasets get brittle interpolants whose full-prior mid-gap variance
fattens or blows up sampled trajectories.  The taper serves both
regimes, and the variance anchor lets the search reach noise-dominated
fits (small output scale under a large nugget) whose draws stay thin
even far from data.  Everything is deterministic.

All linear algebra goes through one Cholesky factorization of
K + sigma_reg2 * I; no matrix is ever inverted explicitly.  If the factor
fails, jitter escalates from 1e-10 to 1e-4 (relative to sigma_o2) in
decade steps before IllConditioned is raised.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

from pintprob.core import IllConditioned, SizeMismatch

__all__ = [
    "KERNELS",
    "kernel_value",
    "kernel_matrix",
    "FittedGP",
    "MultiGP",
    "taper_ceiling",
    "fit",
    "posterior",
    "sample_correction",
    "NegativeVarianceAlarm",
]

KERNELS = ("gaussian", "matern12", "matern32", "matern52")

# Pre-clamp posterior variances below -1e-8 * sigma_o2 indicate a badly
# conditioned factor and are worth surfacing; smaller negativity is routine
# floating-point noise and is silently clamped to zero.
_NEG_VAR_TOL = 1e-8

_JITTER_FLOOR = 1e-10
_JITTER_CEIL = 1e-4


class NegativeVarianceAlarm(RuntimeWarning):
    """Posterior variance went negative beyond round-off scale."""


def _sq_to_value(kernel, sq, sigma_i2, sigma_o2):
    sq = np.maximum(sq, 0.0)
    if kernel == "gaussian":
        return sigma_o2 * np.exp(-sq / sigma_i2)
    t = np.sqrt(sq / sigma_i2)
    if kernel == "matern12":
        return sigma_o2 * np.exp(-t)
    if kernel == "matern32":
        a = math.sqrt(3.0) * t
        return sigma_o2 * (1.0 + a) * np.exp(-a)
    if kernel == "matern52":
        a = math.sqrt(5.0) * t
        return sigma_o2 * (1.0 + a + a * a / 3.0) * np.exp(-a)
    raise ValueError(f"unknown kernel {kernel!r}, have {KERNELS}")


def kernel_value(kernel, u, v, theta):
    """k(u, v) for two single states; theta = (sigma_i2, sigma_o2, sigma_reg2)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    sq = float(((u - v) ** 2).sum())
    return float(_sq_to_value(kernel, np.array(sq), theta[0], theta[1]))


def kernel_matrix(kernel, X, Z, theta):
    """Cross kernel matrix (len(X), len(Z)); regularization is not added."""
    sq = cdist(X, Z, "sqeuclidean")
    return _sq_to_value(kernel, sq, theta[0], theta[1])


def _chol_regularized(K_base, sigma_o2, sigma_reg2):
    """Lower Cholesky factor of K_base + sigma_reg2 I, escalating jitter.

    Returns (L, extra) where extra is the jitter that had to be added on
    top of sigma_reg2 (0.0 normally).  Raises IllConditioned if the ladder
    is exhausted.
    """
    D = K_base.shape[0]
    eye = np.eye(D)
    ref = sigma_o2 if sigma_o2 > 0 else 1.0
    jitter = 0.0
    while True:
        try:
            L = cholesky(
                K_base + (sigma_reg2 + jitter) * eye,
                lower=True,
                check_finite=False,
            )
            return L, jitter
        except np.linalg.LinAlgError:
            pass
        if jitter == 0.0:
            jitter = _JITTER_FLOOR * ref
            if jitter == 0.0:
                # ref so small the first rung underflows; the ladder cannot
                # make progress, so give up instead of spinning.
                raise IllConditioned(
                    f"kernel matrix not factorizable at size {D} "
                    f"(sigma_o2={sigma_o2:g} too small for a jitter ladder)"
                )
        else:
            jitter *= 10.0
        if jitter > _JITTER_CEIL * ref:
            raise IllConditioned(
                f"kernel matrix not factorizable at size {D} "
                f"(sigma_reg2={sigma_reg2:g}, jitter ladder exhausted)"
            )


def _mll_from_chol(L, y):
    alpha = cho_solve((L, True), y, check_finite=False)
    logdet = 2.0 * np.log(np.diag(L)).sum()
    return float(
        -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * len(y) * math.log(2.0 * math.pi)
    )


@dataclass
class FittedGP:
    """One scalar GP conditioned on (X, y)."""

    kernel: str
    X: np.ndarray
    y: np.ndarray
    theta: tuple
    L: np.ndarray
    alpha: np.ndarray
    mll: float
    jitter: float = 0.0

    def posterior(self, U):
        """Posterior mean and variance at query rows U (Q, p) -> ((Q,), (Q,)).

        Variance is the noise-free predictive variance, clamped at zero.
        A clamp deeper than 1e-8 * sigma_o2 raises NegativeVarianceAlarm
        as a warning.
        """
        U = np.atleast_2d(np.asarray(U, dtype=np.float64))
        if U.shape[1] != self.X.shape[1]:
            raise SizeMismatch(
                f"query dim {U.shape[1]} != training dim {self.X.shape[1]}"
            )
        Kxq = kernel_matrix(self.kernel, self.X, U, self.theta)
        mean = Kxq.T.dot(self.alpha)
        V = solve_triangular(self.L, Kxq, lower=True, check_finite=False)
        var = self.theta[1] - np.einsum("ij,ij->j", V, V)
        worst = var.min(initial=0.0)
        if worst < -_NEG_VAR_TOL * max(self.theta[1], 1e-300):
            warnings.warn(
                f"posterior variance clamped from {worst:.3e}",
                NegativeVarianceAlarm,
                stacklevel=2,
            )
        np.maximum(var, 0.0, out=var)
        return mean, var


def _data_scales(sq_upper, y):
    """Median nonzero squared distance and (always positive) target variance.

    These anchor the candidate grid and bound the descent box.  Exactly
    constant targets fall back to their mean square, and all-zero targets
    to 1e-12; the marginal likelihood is unbounded as sigma_o2 -> 0 on
    such data, so the box is what makes the search terminate there.
    """
    pos = sq_upper[sq_upper > 0]
    med = float(np.median(pos)) if pos.size else 1.0
    var_y = float(np.var(y))
    if var_y <= 0.0:
        var_y = max(float(np.mean(y * y)), 1e-12)
    return med, var_y


# Multiplicative half-width of the hyperparameter search box around the
# data scales.  Real fits land within a couple of decades of (med, var_y);
# eight decades only ever binds on degenerate targets.
_BOX = 1e8


def _candidate_grid(sq_upper, y, reg_ceil):
    med, var_y = _data_scales(sq_upper, y)
    in_scales = med * np.logspace(-2.0, 2.0, 5)
    out_scales = var_y * np.logspace(-2.0, 2.0, 5)
    # Regularization candidates are anchored to the data variance, not to
    # the output-scale candidate, so the grid reaches the noise-dominated
    # corner (sigma_reg2 ~ var(y) with a small output scale) as well as
    # interpolation.  They span the allowed band: floor, ceiling, and the
    # geometric middle.
    regs = var_y * np.array(
        (_JITTER_FLOOR, math.sqrt(_JITTER_FLOOR * reg_ceil), reg_ceil)
    )
    return [
        (si, so, sr)
        for si in in_scales
        for so in out_scales
        for sr in regs
    ]


def _mll_of(kernel, sq, y, theta):
    # Candidates are scored through the same escalating-jitter
    # factorization used at prediction time.  Long length scales make the
    # kernel matrix numerically rank-deficient at in-band regularization;
    # rejecting them outright would bias the search toward spiky fits
    # whose mid-gap variance reverts to the full prior.
    si, so, sr = theta
    if si <= 0 or so < 0 or sr < 0:
        return -np.inf
    K = _sq_to_value(kernel, sq, si, so)
    try:
        L, _ = _chol_regularized(K, so, sr)
    except IllConditioned:
        return -np.inf
    return _mll_from_chol(L, y)


def _grid_best(kernel, sq, y, reg_ceil):
    cands = _candidate_grid(sq, y, reg_ceil)
    scores = [_mll_of(kernel, sq, y, th) for th in cands]
    best_i = int(np.argmax(scores))
    return list(cands[best_i]), scores[best_i]


def _clamp_theta(theta, med, var_y, reg_ceil):
    """Project a candidate into the search box.  Length and output scales
    stay within _BOX decades of the data scales; the regularization sits
    between the conditioning floor (relative to the clamped output scale)
    and the noise budget ceiling (relative to the data variance)."""
    t = list(theta)
    t[0] = min(max(t[0], med / _BOX), med * _BOX)
    t[1] = min(max(t[1], var_y / _BOX), var_y * _BOX)
    t[2] = min(max(t[2], _JITTER_FLOOR * t[1]), reg_ceil * var_y)
    return t


def _polish(kernel, sq, y, best_theta, best_mll, reg_ceil):
    """Coordinate descent with shrinking multiplicative steps.  Greedy and
    deterministic; a handful of extra factorizations at most.  Every trial
    is projected back into the search box, so descent terminates even when
    the likelihood is unbounded along a coordinate (all-zero targets)."""
    med, var_y = _data_scales(sq, y)
    for step in (4.0, 2.0, math.sqrt(2.0)):
        improved = True
        while improved:
            improved = False
            for j in range(3):
                for factor in (step, 1.0 / step):
                    trial = list(best_theta)
                    trial[j] *= factor
                    trial = _clamp_theta(trial, med, var_y, reg_ceil)
                    if trial == best_theta:
                        continue
                    m = _mll_of(kernel, sq, y, trial)
                    if m > best_mll:
                        best_theta, best_mll = trial, m
                        improved = True
    return best_theta, best_mll


def _finalize(kernel, X, y, theta, mll):
    si, so, sr = theta
    sq = cdist(X, X, "sqeuclidean")
    K = _sq_to_value(kernel, sq, si, so)
    L, jitter = _chol_regularized(K, so, sr)
    alpha = cho_solve((L, True), y, check_finite=False)
    return FittedGP(
        kernel=kernel,
        X=X,
        y=y,
        theta=(float(si), float(so), float(sr)),
        L=L,
        alpha=alpha,
        mll=mll,
        jitter=jitter,
    )


def _search(kernel, sq, y, warm_theta, reg_ceil=_JITTER_CEIL):
    """Grid argmax plus descent, with an independent descent from the
    warm start when one is given.  Returns the better endpoint."""
    theta, mll = _grid_best(kernel, sq, y, reg_ceil)
    if np.isfinite(mll):
        theta, mll = _polish(kernel, sq, y, theta, mll, reg_ceil)
    if warm_theta is not None:
        med, var_y = _data_scales(sq, y)
        wt = _clamp_theta([float(t) for t in warm_theta], med, var_y, reg_ceil)
        wml = _mll_of(kernel, sq, y, wt)
        if np.isfinite(wml):
            wt, wml = _polish(kernel, sq, y, wt, wml, reg_ceil)
            if wml > mll:
                theta, mll = wt, wml
    return theta, mll


def _fit_one(kernel, X, y, sq, warm_theta, reg_ceil):
    theta, mll = _search(kernel, sq, y, warm_theta, reg_ceil)
    if not np.isfinite(mll):
        raise IllConditioned("no hyperparameter candidate was factorizable")
    return _finalize(kernel, X, y, theta, mll)


class MultiGP:
    """d independent scalar GPs over a shared input matrix."""

    def __init__(self, parts):
        self.parts = list(parts)

    @property
    def output_dim(self):
        return len(self.parts)

    @property
    def thetas(self):
        return [g.theta for g in self.parts]

    def posterior(self, U):
        """Means and variances at U (Q, p) -> ((Q, d), (Q, d))."""
        U = np.atleast_2d(np.asarray(U, dtype=np.float64))
        Q = U.shape[0]
        d = len(self.parts)
        M = np.empty((Q, d))
        V = np.empty((Q, d))
        for s, g in enumerate(self.parts):
            M[:, s], V[:, s] = g.posterior(U)
        return M, V

    def posterior_mean(self, U):
        return self.posterior(U)[0]


def taper_ceiling(iteration):
    """Regularization ceiling (relative to var(y)) for outer iteration k.

    The first dataset is a single coarse trajectory: sparse, clustered
    along a curve, and full of structure the kernel cannot resolve yet.
    A ceiling at the full data variance admits noise-dominated fits,
    whose small output scale keeps posterior draws thin everywhere while
    the mean tracks the large-scale trend.  The ceiling then drops two
    decades per iteration until it reaches the jitter band, where the
    fit must interpolate and the corrector can contract.  The drop rate
    trades smoothing freedom against churn: while the ceiling still
    binds, every refit shifts the posterior mean and the convergence
    front cannot lock.
    """
    if iteration < 1:
        raise ValueError(f"iteration must be >= 1, got {iteration}")
    return max(10.0 ** (2 * (1 - iteration)), 1e-8)


def fit(X, Y, kernel="gaussian", warm_start=None, reg_ceiling=None):
    """Fit one scalar GP per column of Y on shared inputs X.

    Parameters
    ----------
    X : (D, p) inputs, Y : (D, d) targets.
    kernel : kernel name.
    warm_start : optional MultiGP or sequence of theta tuples whose
        hyperparameters join the candidate grid (one per column).
    reg_ceiling : upper bound on sigma_reg2 / var(y) during the search;
        defaults to the jitter band ceiling.  Solver loops pass
        taper_ceiling(k) here.

    Returns MultiGP.  Raises IllConditioned if no candidate factorizes.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise SizeMismatch(f"X rows {X.shape[0]} != Y rows {Y.shape[0]}")
    if X.shape[0] < 1:
        raise SizeMismatch("need at least one observation")
    ceil = _JITTER_CEIL if reg_ceiling is None else float(reg_ceiling)
    if not _JITTER_FLOOR <= ceil <= 1.0:
        raise ValueError(f"reg_ceiling {ceil} outside [{_JITTER_FLOOR}, 1.0]")
    warm = None
    if warm_start is not None:
        warm = (
            warm_start.thetas if isinstance(warm_start, MultiGP) else list(warm_start)
        )
        if len(warm) != Y.shape[1]:
            raise SizeMismatch("warm_start column count mismatch")
    sq = cdist(X, X, "sqeuclidean")
    parts = []
    for s in range(Y.shape[1]):
        parts.append(
            _fit_one(kernel, X, Y[:, s], sq, warm[s] if warm else None, ceil)
        )
    return MultiGP(parts)


def posterior(model, U):
    """Module-level convenience: model.posterior(U)."""
    return model.posterior(U)


def sample_correction(model, U, rng):
    """Draw one correction per query row from the diagonal posterior.

    z[q] ~ N(mean(U[q]), diag(var(U[q]))), independent across rows and
    coordinates, using the provided numpy Generator.
    """
    M, V = model.posterior(U)
    return M + np.sqrt(V) * rng.standard_normal(M.shape)
