"""Probabilistic parallel-in-time solver.

Where the deterministic drivers carry one state per knot, this one carries
an ensemble of n states and propagates the emulator's uncertainty through
the update instead of collapsing it: each member takes the coarse solver
plus a correction drawn from the GP posterior at its own position
(ancestral sampling through the iteration),

    u[j, i, k] = G(u[j, i-1, k]) + z[j],
    z[j] ~ N(mean(u[j, i-1, k]), diag var(u[j, i-1, k])).

The emulator trains once per iteration on (ensemble mean, fine-minus-
coarse correction) pairs: means of the previous iteration's unconverged
knots get one fine and one coarse solve each (the batched fine solve is
the part a cluster would parallelize), so the fine-solver cost per
iteration matches the deterministic methods.  With config.neighbor_count
set, each interval of the sweep fits a local GP anchored at the incoming
ensemble mean and shares it across members.

Convergence is judged per knot on diagonal-Gaussian summaries of
consecutive ensembles under the squared Wasserstein-2 distance; the front
L advances over the contiguous prefix below epsilon and those knots
freeze.  Three early exits can end a run before the budget: a cap on the
unconverged ensembles' spread, and a plateau rule that fires when the
spread at the first unconverged knot stops shrinking.  Exit precedence is
converged, then variance-cap, then variance-plateau, then budget.

Randomness is reproducible by construction: every draw comes from a
counter-keyed stream (seed, knot, iteration, member), so results do not
depend on evaluation order or worker count.  The initial ensemble at knot
0 uses keys (seed, 0, 0, j), which no ancestral step reuses.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from pintprob import gp, nngp
from pintprob.core import (
    CorrectionDataset,
    IterationRecord,
    RunConfig,
    RunRecord,
    SizeMismatch,
    check_finite,
    standard_normal_block,
)

__all__ = [
    "GaussianSummary",
    "InitialDistribution",
    "ExitCondition",
    "summarize",
    "w2_gaussian",
    "w2_exact",
    "ancestral_step",
    "prob_run",
]


@dataclass(frozen=True)
class GaussianSummary:
    """Diagonal-Gaussian summary of an ensemble: per-coordinate mean and
    sample standard deviation (n-1 denominator; zero spread for n=1)."""

    mean: np.ndarray
    stddev: np.ndarray


def summarize(samples) -> GaussianSummary:
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n, d = samples.shape
    sd = samples.std(axis=0, ddof=1) if n > 1 else np.zeros(d)
    return GaussianSummary(mean=samples.mean(axis=0), stddev=sd)


def w2_gaussian(a: GaussianSummary, b: GaussianSummary) -> float:
    """Squared W2 distance between diagonal Gaussians:
    ||mean_a - mean_b||^2 + sum_s (stddev_a[s] - stddev_b[s])^2."""
    dm = a.mean - b.mean
    ds = a.stddev - b.stddev
    return float(dm.dot(dm) + ds.dot(ds))


def w2_exact(A, B, p=2) -> float:
    """Empirical p-Wasserstein distance (raised to p) between two equally
    weighted samples of the same size: optimal assignment of members, then
    (1/n) sum of paired distances to the p.  Exact but O(n^3)."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape != B.shape:
        raise SizeMismatch(f"sample shapes differ: {A.shape} vs {B.shape}")
    cost = cdist(A, B) ** p
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / A.shape[0])


@dataclass(frozen=True)
class InitialDistribution:
    """Distribution of the knot-0 state: a point mass at the system's
    initial condition, or an isotropic Gaussian around it."""

    center: np.ndarray
    sigma: float

    @property
    def kind(self) -> str:
        return "dirac" if self.sigma == 0.0 else "gaussian"

    @classmethod
    def from_config(cls, system, config: RunConfig) -> "InitialDistribution":
        return cls(center=system.u0(), sigma=config.sigma_init)

    def sample(self, seed: int, n: int) -> np.ndarray:
        """(n, d) draws using streams (seed, 0, 0, j).  sigma == 0 returns
        the center in every row, bit for bit."""
        d = self.center.shape[0]
        noise = standard_normal_block(seed, 0, 0, n, d)
        return self.center + self.sigma * noise


@dataclass(frozen=True)
class ExitCondition:
    """Early-exit policy checked after each iteration's convergence scan.

    variance_cap: exit when any unconverged knot's largest per-coordinate
    spread exceeds the cap (the emulator is diverging).
    plateau: exit when the spread statistic at the first unconverged knot
    has not dropped by the relative tolerance over `plateau_window`
    consecutive iterations since the front last advanced; with window w
    the rule compares s_k against s_{k-w+1} and can fire at the w-th entry
    of the history.
    """

    K_stop: int
    variance_cap: float | None = None
    plateau_window: int | None = None
    plateau_rel_tol: float = 0.05

    @classmethod
    def from_config(cls, system, config: RunConfig) -> "ExitCondition":
        K = (
            config.max_iterations
            if config.max_iterations is not None
            else system.K_stop
        )
        return cls(
            K_stop=K,
            variance_cap=config.variance_cap,
            plateau_window=config.plateau_window,
            plateau_rel_tol=config.plateau_rel_tol,
        )

    def check(self, k, L, N, stddevs, plateau_history):
        """Exit reason after iteration k, or None to keep going.

        stddevs: (N+1, d) per-knot ensemble spreads this iteration.
        plateau_history: spread statistics since the front last advanced,
        most recent last (already including this iteration).
        """
        if L >= N:
            return "converged"
        if self.variance_cap is not None:
            worst = float(stddevs[L + 1 :].max(initial=0.0))
            if worst > self.variance_cap:
                return "variance-cap"
        w = self.plateau_window
        if w is not None and len(plateau_history) >= w:
            ref = plateau_history[-w]
            if plateau_history[-1] > (1.0 - self.plateau_rel_tol) * ref:
                return "variance-plateau"
        if k >= self.K_stop:
            return "budget"
        return None


def ancestral_step(system, model, samples, target, k, seed, zero_variance=False):
    """One ensemble update from knot target-1 to knot target.

    Coarse-propagates every member and adds that member's posterior
    correction draw, noise keyed by (seed, target, k, member).  With
    zero_variance the draw collapses to the posterior mean, which is the
    deterministic limit of the method.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n, d = samples.shape
    G = system.coarse(samples, target - 1)
    M, V = model.posterior(samples)
    if zero_variance:
        return G + M
    noise = standard_normal_block(seed, target, k, n, d)
    return G + M + np.sqrt(V) * noise


def prob_run(system, config: RunConfig, zero_variance=False) -> RunRecord:
    """Run the probabilistic solver; returns the full iteration history.

    zero_variance switches every ancestral draw to its posterior mean,
    reducing the method to its deterministic counterpart (useful with
    sigma_init = 0 and n_samples = 1).
    """
    if config.sigma_init > 0.0 or not zero_variance:
        config.require_ensemble()
    N, d = system.mesh.N, system.dimension
    n = config.n_samples
    seed = config.seed
    eps = config.epsilon
    use_nn = config.neighbor_count is not None
    algorithm = "prob-nngparareal" if use_nn else "prob-gparareal"
    exit_cond = ExitCondition.from_config(system, config)
    K_stop = exit_cond.K_stop
    dataset = CorrectionDataset(d)

    # Iteration 0: draw the initial ensemble and push it through the
    # coarse solver knot by knot, members batched.
    t0 = time.perf_counter()
    ens = [None] * (N + 1)
    ens[0] = InitialDistribution.from_config(system, config).sample(seed, n)
    for i in range(N):
        ens[i + 1] = system.coarse(ens[i], i)
    t_coarse = time.perf_counter() - t0
    records = [
        _ensemble_record(
            0, 0, ens, np.full(N + 1, np.nan),
            {"coarse": t_coarse, "fine": 0.0, "gp": 0.0},
        )
    ]

    L = 0
    K_conv = None
    K_end = 0
    termination = "budget"
    plateau_history: list[float] = []
    model = None
    warm_by_interval = {}
    for k in range(1, K_stop + 1):
        # Fine and coarse solves at the previous iteration's knot means.
        ubar = np.stack([ens[i].mean(axis=0) for i in range(L, N)])
        t0 = time.perf_counter()
        F_bar = system.fine(ubar, L)
        t_fine = time.perf_counter() - t0
        t0 = time.perf_counter()
        G_bar = system.coarse(ubar, L)
        t_coarse = time.perf_counter() - t0
        dataset.extend(ubar, F_bar - G_bar, iteration=k)
        X, Y = dataset.inputs, dataset.outputs

        t0 = time.perf_counter()
        hyper = None
        index = None
        if use_nn:
            index = nngp.NeighborIndex(X)
        else:
            warm = model if config.gp_refit == "warm" else None
            model = gp.fit(
                X, Y, config.kernel, warm_start=warm,
                reg_ceiling=gp.taper_ceiling(k),
            )
            hyper = list(model.thetas)
        t_gp = time.perf_counter() - t0

        # Ancestral sweep over unconverged knots; converged ones carry over.
        new_ens = list(ens)
        nn_hyper = []
        t_sweep_gp = 0.0
        t0 = time.perf_counter()
        for i in range(L + 1, N + 1):
            incoming = new_ens[i - 1]
            if use_nn:
                tg = time.perf_counter()
                warm = (
                    warm_by_interval.get(i - 1)
                    if config.gp_refit == "warm"
                    else None
                )
                local, _ = nngp.fit_local(
                    X, Y, incoming.mean(axis=0),
                    m=config.neighbor_count, kernel=config.kernel,
                    warm_start=warm, index=index,
                    reg_ceiling=gp.taper_ceiling(k),
                )
                warm_by_interval[i - 1] = local
                nn_hyper.append([i - 1, list(local.thetas)])
                step_model = local
                t_sweep_gp += time.perf_counter() - tg
            else:
                step_model = model
            new_ens[i] = ancestral_step(
                system, step_model, incoming, i, k, seed,
                zero_variance=zero_variance,
            )
            check_finite(new_ens[i], interval=i, iteration=k)
        t_sweep = time.perf_counter() - t0
        t_gp += t_sweep_gp
        t_coarse += t_sweep - t_sweep_gp
        if use_nn:
            hyper = nn_hyper

        # Convergence scan against the previous iteration, then the front.
        errs = np.full(N + 1, np.nan)
        for i in range(L + 1, N + 1):
            errs[i] = w2_gaussian(summarize(new_ens[i]), summarize(ens[i]))
        L_new = L
        while L_new < N and errs[L_new + 1] < eps:
            L_new += 1
        if L_new > L:
            plateau_history.clear()
        L = L_new

        rec = _ensemble_record(
            k, L, new_ens, errs,
            {"coarse": t_coarse, "fine": t_fine, "gp": t_gp},
            gp_hyperparams=hyper,
        )
        if L < N:
            s_k = float(rec.stddevs[L + 1].max())
            plateau_history.append(s_k)
            rec.plateau_stat = s_k
        records.append(rec)
        K_end = k
        ens = new_ens

        reason = exit_cond.check(k, L, N, rec.stddevs, plateau_history)
        if reason == "converged":
            K_conv = k
            termination = "converged"
            break
        if reason is not None:
            termination = reason
            break

    return RunRecord(
        config=config,
        algorithm=algorithm,
        mesh=system.mesh,
        iterations=records,
        dataset=dataset,
        K_stop=K_stop,
        K_end=K_end,
        K_conv=K_conv,
        termination=termination,
    )


def _ensemble_record(k, L, ens, errs, timings, **extra):
    means = np.stack([e.mean(axis=0) for e in ens])
    stds = np.stack(
        [
            e.std(axis=0, ddof=1) if e.shape[0] > 1 else np.zeros(e.shape[1])
            for e in ens
        ]
    )
    return IterationRecord(
        k=k,
        L=L,
        means=means,
        stddevs=stds,
        conv_w2=errs,
        timings=timings,
        ensembles=[e.copy() for e in ens],
        **extra,
    )
