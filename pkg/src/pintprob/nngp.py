"""Nearest-neighbor Gaussian-process variant.

Instead of conditioning on the whole correction dataset, each mesh
interval trains a small local GP on the m rows nearest (Euclidean) to an
anchor state, normally the interval's incoming query state.  All output
coordinates share one neighbor set per anchor.  m around 15 keeps the
factorizations tiny, which is what makes the method viable when the
dataset or the state dimension grows.

Neighbor lookups go through a k-d tree with a deterministic tie rule:
candidates are re-ranked by exact squared distance with the row index as
tie-breaker, so equal-distance rows resolve to the lower index no matter
what order the tree visits them in.

Hyperparameter search runs through the exact same grid, scorer and
coordinate descent as the full GP, so a local fit with m >= D reproduces
the full fit bit for bit.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from pintprob import gp
from pintprob.core import IllConditioned, SizeMismatch

__all__ = ["NeighborIndex", "fit_local", "DEFAULT_NEIGHBORS"]

DEFAULT_NEIGHBORS = 15

# Extra candidates fetched from the tree so boundary ties can be re-ranked
# deterministically before truncation.
_TIE_SLACK = 16


class NeighborIndex:
    """k-d tree over dataset inputs with deterministic tie-breaking."""

    def __init__(self, X):
        self.X = np.ascontiguousarray(X, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[0] < 1:
            raise SizeMismatch("neighbor index needs a nonempty (D, p) matrix")
        self._tree = cKDTree(self.X)

    def __len__(self):
        return self.X.shape[0]

    def query(self, u, m):
        """Indices of the min(m, D) nearest rows to u, nearest first.

        Exact squared Euclidean distances are recomputed for the candidate
        set and sorted with the row index as secondary key, so ties always
        resolve to the lower index.
        """
        if m < 1:
            raise ValueError("m must be >= 1")
        D = len(self)
        keep = min(m, D)
        u = np.asarray(u, dtype=np.float64).reshape(-1)
        fetch = min(D, keep + _TIE_SLACK)
        _, cand = self._tree.query(u, k=fetch)
        cand = np.atleast_1d(cand)
        d2 = ((self.X[cand] - u) ** 2).sum(axis=1)
        order = np.lexsort((cand, d2))
        cand, d2 = cand[order], d2[order]
        if fetch < D and d2[keep - 1] >= d2[-1] - 1e-30:
            # Tie may extend past the fetched candidates: fall back to a
            # full scan, same ranking rule.
            d2 = ((self.X - u) ** 2).sum(axis=1)
            order = np.lexsort((np.arange(D), d2))
            return order[:keep]
        return cand[:keep]


def fit_local(X, Y, anchor, m=DEFAULT_NEIGHBORS, kernel="gaussian",
              warm_start=None, index=None, reg_ceiling=None):
    """Fit per-coordinate GPs on the m dataset rows nearest to anchor.

    Parameters
    ----------
    X, Y : full correction dataset, (D, p) and (D, d).
    anchor : state (p,) the neighborhood is centered on.
    m : neighbor count; capped at D.
    warm_start : optional theta sequence, one per output coordinate.
    index : optional prebuilt NeighborIndex over X (rebuild is O(D log D),
        so callers fitting many anchors against one dataset pass it in).
    reg_ceiling : as in the full fit; solver loops taper it by iteration.

    Returns (MultiGP, neighbor indices).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if index is None:
        index = NeighborIndex(X)
    # Sort the neighbor set into dataset order: the fit is permutation
    # invariant mathematically, and a canonical row order makes it
    # reproducible bit for bit (m >= D then matches the full fit exactly).
    idx = np.sort(index.query(anchor, m))
    Xl = X[idx]
    Yl = Y[idx]
    warm = None
    if warm_start is not None:
        warm = warm_start.thetas if isinstance(warm_start, gp.MultiGP) else list(
            warm_start
        )
        if len(warm) != Y.shape[1]:
            raise SizeMismatch("warm_start column count mismatch")
    ceil = gp._JITTER_CEIL if reg_ceiling is None else float(reg_ceiling)
    sq = cdist(Xl, Xl, "sqeuclidean")
    parts = []
    for s in range(Yl.shape[1]):
        y = Yl[:, s]
        theta, mll = gp._search(kernel, sq, y, warm[s] if warm else None, ceil)
        if not np.isfinite(mll):
            raise IllConditioned("no hyperparameter candidate was factorizable")
        parts.append(gp._finalize(kernel, Xl, y, theta, mll))
    return gp.MultiGP(parts), idx
