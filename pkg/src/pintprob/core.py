"""Shared domain types for the parallel-in-time solvers.

States are plain 1-D float64 numpy arrays in normalized coordinates (each
coordinate nominally in [-1, 1]); ensembles hold n such states as the rows of
an (n, d) array.  All types here are immutable after construction, or expose
only append-style mutation owned by a single solver driver, so they are safe
to share read-only across worker threads.

Random-number streams are keyed by (seed, interval, iteration, sample) so
that every draw in a run is addressable independently of scheduling order:
the whole run is a pure function of (config, seed) at any worker count.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NonFiniteState",
    "IllConditioned",
    "SizeMismatch",
    "TimeMesh",
    "Ensemble",
    "CorrectionDataset",
    "RunConfig",
    "IterationRecord",
    "RunRecord",
    "make_rng_stream",
    "worker_count",
]


class NonFiniteState(RuntimeError):
    """A propagated state contains NaN or Inf (integrator blow-up)."""

    def __init__(self, message, interval=None, iteration=None, sample=None):
        super().__init__(message)
        self.interval = interval
        self.iteration = iteration
        self.sample = sample


class IllConditioned(RuntimeError):
    """A kernel matrix stayed non-positive-definite at the jitter ceiling."""


class SizeMismatch(ValueError):
    """Two collections that must align (samples, dims) do not."""


def check_finite(arr, *, interval=None, iteration=None):
    """Raise NonFiniteState if ``arr`` has any NaN/Inf entry.

    The offending sample index (row for 2-D input) is attached to the error
    so drivers can report where a blow-up happened.
    """
    if np.isfinite(arr).all():
        return
    bad = np.argwhere(~np.isfinite(np.atleast_2d(arr)).all(axis=1)).ravel()
    sample = int(bad[0]) if bad.size else None
    raise NonFiniteState(
        f"non-finite state (interval={interval}, iteration={iteration}, "
        f"sample={sample})",
        interval=interval,
        iteration=iteration,
        sample=sample,
    )


@dataclass(frozen=True)
class TimeMesh:
    """Uniform partition of [t0, tN] into N intervals.

    Knots are computed multiplicatively as ``t0 + i * dt`` rather than by
    accumulation, so knot N reconstructs tN to rounding and repeated mesh
    walks cannot drift.
    """

    t0: float
    tN: float
    N: int

    def __post_init__(self):
        if self.N < 2:
            raise ValueError(f"need N >= 2 intervals, got {self.N}")
        if not self.tN > self.t0:
            raise ValueError(f"need tN > t0, got [{self.t0}, {self.tN}]")

    @property
    def dt(self) -> float:
        return (self.tN - self.t0) / self.N

    def knot(self, i: int) -> float:
        return self.t0 + i * self.dt

    def knots(self) -> np.ndarray:
        return self.t0 + np.arange(self.N + 1) * self.dt


@dataclass
class Ensemble:
    """n sampled solution points at one time knot.

    ``samples`` has shape (n, d).  The array is marked read-only on
    construction; a converged interval keeps the identical object for all
    later iterations (the freeze invariant), so nothing downstream may
    write into it.
    """

    samples: np.ndarray
    interval_index: int
    iteration: int

    def __post_init__(self):
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise SizeMismatch(f"samples must be (n, d), got {self.samples.shape}")
        self.samples.flags.writeable = False

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    def mean(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def stddev(self) -> np.ndarray:
        """Per-coordinate sample standard deviation (n-1 denominator).

        A singleton ensemble has no spread by convention (zeros), which
        keeps Gaussian summaries defined for deterministic n=1 runs.
        """
        if self.n < 2:
            return np.zeros(self.d)
        return self.samples.std(axis=0, ddof=1)


class CorrectionDataset:
    """Accumulated (input state, fine-minus-coarse discrepancy) pairs.

    Rows closer than ``dedupe_tol`` in Euclidean distance to an existing
    input are dropped at append time: re-evaluating a frozen knot's mean on
    a later iteration would otherwise insert near-duplicates that make the
    kernel matrix singular.
    """

    def __init__(self, dim: int, dedupe_tol: float = 1e-12):
        self.dim = dim
        self.dedupe_tol = dedupe_tol
        self._inputs: list[np.ndarray] = []
        self._outputs: list[np.ndarray] = []
        self._iteration_added: list[int] = []

    def __len__(self) -> int:
        return len(self._inputs)

    def append(self, x: np.ndarray, y: np.ndarray, iteration: int) -> bool:
        """Add one pair; returns False if dropped as a near-duplicate."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.shape != (self.dim,) or y.shape != (self.dim,):
            raise SizeMismatch(
                f"expected shape ({self.dim},), got {x.shape} / {y.shape}"
            )
        if self._inputs:
            d2 = ((np.asarray(self._inputs) - x) ** 2).sum(axis=1)
            if d2.min() <= self.dedupe_tol**2:
                return False
        self._inputs.append(x)
        self._outputs.append(y)
        self._iteration_added.append(iteration)
        return True

    def extend(self, xs, ys, iteration: int) -> int:
        added = 0
        for x, y in zip(xs, ys):
            added += self.append(x, y, iteration)
        return added

    @property
    def inputs(self) -> np.ndarray:
        return np.asarray(self._inputs, dtype=np.float64).reshape(-1, self.dim)

    @property
    def outputs(self) -> np.ndarray:
        return np.asarray(self._outputs, dtype=np.float64).reshape(-1, self.dim)

    @property
    def iteration_added(self) -> np.ndarray:
        return np.asarray(self._iteration_added, dtype=np.int64)

    def up_to_iteration(self, k: int) -> "CorrectionDataset":
        """Snapshot of the dataset as it stood after iteration k."""
        sub = CorrectionDataset(self.dim, self.dedupe_tol)
        for x, y, it in zip(self._inputs, self._outputs, self._iteration_added):
            if it <= k:
                sub._inputs.append(x)
                sub._outputs.append(y)
                sub._iteration_added.append(it)
        return sub


_KERNELS = ("gaussian", "matern12", "matern32", "matern52")
_GP_REFIT = ("warm", "cold")


@dataclass
class RunConfig:
    """Everything a solver run depends on besides the system registry entry.

    ``statistic`` and ``distance`` are fixed: convergence always compares
    diagonal-Gaussian summaries of consecutive ensembles under the squared
    Wasserstein-2 distance.  They are recorded here so serialized configs
    are self-describing.
    """

    system_id: str
    seed: int
    n_samples: int = 5000
    epsilon: float = 1e-7
    max_iterations: int | None = None  # None: use the system's budget
    kernel: str = "gaussian"
    neighbor_count: int | None = None  # None: full-GP backend
    sigma_init: float = 0.0
    gp_refit: str = "warm"
    variance_cap: float | None = None
    plateau_window: int | None = None  # None: plateau rule disabled
    plateau_rel_tol: float = 0.05
    statistic: str = field(default="empirical-gaussian", init=False)
    distance: str = field(default="squared-w2", init=False)

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.sigma_init < 0:
            raise ValueError("sigma_init must be >= 0")
        if self.kernel not in _KERNELS:
            raise ValueError(f"kernel must be one of {_KERNELS}, got {self.kernel!r}")
        if self.gp_refit not in _GP_REFIT:
            raise ValueError(f"gp_refit must be one of {_GP_REFIT}")
        if self.neighbor_count is not None and self.neighbor_count < 1:
            raise ValueError("neighbor_count must be >= 1 or None for full GP")
        self.seed = int(self.seed)

    def require_ensemble(self):
        """Probabilistic solvers need n >= 2 whenever there is any spread."""
        if self.n_samples < 2:
            raise ValueError(
                "probabilistic runs need n_samples >= 2 to estimate spread"
            )

    # -- config-file round trip ------------------------------------------

    _FLOATS = ("epsilon", "sigma_init", "plateau_rel_tol")

    def to_ini(self, path):
        cp = configparser.ConfigParser()
        cp["run"] = {}
        sec = cp["run"]
        sec["system"] = self.system_id
        sec["seed"] = str(self.seed)
        sec["samples"] = str(self.n_samples)
        sec["epsilon"] = repr(self.epsilon)
        if self.max_iterations is not None:
            sec["kstop"] = str(self.max_iterations)
        sec["kernel"] = self.kernel
        if self.neighbor_count is not None:
            sec["neighbors"] = str(self.neighbor_count)
        sec["sigma_init"] = repr(self.sigma_init)
        sec["gp_refit"] = self.gp_refit
        if self.variance_cap is not None:
            sec["variance_cap"] = repr(self.variance_cap)
        if self.plateau_window is not None:
            sec["plateau_window"] = str(self.plateau_window)
            sec["plateau_rel_tol"] = repr(self.plateau_rel_tol)
        with open(path, "w") as fh:
            cp.write(fh)

    @classmethod
    def from_section(cls, sec) -> "RunConfig":
        """Build from a configparser section (``[run]`` or a plan entry)."""
        if "seed" not in sec:
            raise ValueError("config section must set an explicit seed")
        kwargs = dict(
            system_id=sec.get("system"),
            seed=sec.getint("seed"),
            n_samples=sec.getint("samples", fallback=5000),
            epsilon=sec.getfloat("epsilon", fallback=1e-7),
            kernel=sec.get("kernel", fallback="gaussian"),
            sigma_init=sec.getfloat("sigma_init", fallback=0.0),
            gp_refit=sec.get("gp_refit", fallback="warm"),
            plateau_rel_tol=sec.getfloat("plateau_rel_tol", fallback=0.05),
        )
        if sec.get("kstop", fallback=None) is not None:
            kwargs["max_iterations"] = sec.getint("kstop")
        if sec.get("neighbors", fallback=None) is not None:
            kwargs["neighbor_count"] = sec.getint("neighbors")
        if sec.get("variance_cap", fallback=None) is not None:
            kwargs["variance_cap"] = sec.getfloat("variance_cap")
        if sec.get("plateau_window", fallback=None) is not None:
            kwargs["plateau_window"] = sec.getint("plateau_window")
        if kwargs["system_id"] is None:
            raise ValueError("config section must name a system")
        return cls(**kwargs)

    @classmethod
    def from_ini(cls, path) -> "RunConfig":
        cp = configparser.ConfigParser()
        with open(path) as fh:
            cp.read_file(fh)
        return cls.from_section(cp["run"])


@dataclass
class IterationRecord:
    """Solver state captured after one iteration (k >= 0).

    ``means`` / ``stddevs`` have shape (N+1, d), one row per knot.
    ``conv_w2`` holds the squared-W2 distance to the previous iteration per
    knot (NaN where not tested).  ``ensembles`` is populated only at the
    record's thinning level; summaries are always present.
    """

    k: int
    L: int
    means: np.ndarray
    stddevs: np.ndarray
    conv_w2: np.ndarray
    timings: dict = field(default_factory=dict)
    ensembles: list | None = None
    gp_hyperparams: list | None = None
    plateau_stat: float | None = None

    @property
    def stddev_max(self) -> float:
        return float(np.max(self.stddevs))


@dataclass
class RunRecord:
    """Per-iteration history of a solver run, the unit of persistence.

    ``K_stop`` is the configured iteration budget, ``K_end`` the last
    executed iteration, and ``K_conv`` the convergence iteration or None if
    the run terminated early.  ``termination`` is one of ``converged``,
    ``budget``, ``variance-cap``, ``variance-plateau``.
    """

    config: RunConfig
    algorithm: str
    mesh: TimeMesh
    iterations: list[IterationRecord] = field(default_factory=list)
    dataset: CorrectionDataset | None = None
    K_stop: int = 0
    K_end: int = 0
    K_conv: int | None = None
    termination: str = "budget"

    def iteration(self, k: int) -> IterationRecord:
        for rec in self.iterations:
            if rec.k == k:
                return rec
        raise KeyError(f"no iteration {k} in record")

    @property
    def converged_counts(self) -> list[int]:
        return [rec.L for rec in self.iterations]

    def validate_freeze(self):
        """L must never decrease across iterations."""
        Ls = self.converged_counts
        if any(b < a for a, b in zip(Ls, Ls[1:])):
            raise AssertionError(f"convergence front moved backwards: {Ls}")


def make_rng_stream(seed: int, i: int, k: int, j: int) -> np.random.Generator:
    """Deterministic random stream for sample j at interval i, iteration k.

    Streams for distinct (seed, i, k, j) keys are statistically independent
    by the spawn-key construction, and a given key always yields the same
    stream no matter which thread asks for it.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(i, k, j))
    return np.random.Generator(np.random.PCG64(ss))


def standard_normal_block(seed: int, i: int, k: int, n: int, d: int) -> np.ndarray:
    """(n, d) standard-normal draws, one keyed stream per sample row."""
    out = np.empty((n, d))
    for j in range(n):
        out[j] = make_rng_stream(seed, i, k, j).standard_normal(d)
    return out


def worker_count() -> int:
    """Worker cap from the PINTPROB_WORKERS environment variable (>= 1)."""
    raw = os.environ.get("PINTPROB_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
