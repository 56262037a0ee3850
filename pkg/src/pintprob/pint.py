"""Deterministic parallel-in-time solvers.

Both drivers march the same skeleton: a cheap sequential coarse pass seeds
iteration 0, then each iteration k evaluates the fine and coarse solvers
in one batch at the previous iteration's knot states (only knots at or
past the convergence front L; the expensive fine batch is the part a
cluster would spread over workers), applies a sequential corrected coarse
sweep, and advances L over the contiguous prefix of knots whose update
distance dropped below epsilon.  Converged knots freeze: they are copied
forward and never re-evaluated.

parareal_run applies the classic lagged correction

    u[i, k] = G(u[i-1, k]) + F(u[i-1, k-1]) - G(u[i-1, k-1])

while gparareal_run replaces the lagged difference with the posterior
mean of a Gaussian-process emulator of the correction F - G, queried at
the current iteration's state u[i-1, k].  The emulator trains on every
(state, correction) pair gathered so far; with config.neighbor_count set
it conditions only on the nearest rows, fitted per interval during the
sweep (anchored at the query state).

Stopping uses the sup-norm update distance per knot.  IterationRecord's
``conv_w2`` field carries that statistic here; for the n=1 point-mass
ensembles of a deterministic run the decision rule is a norm on the mean
update, not a distribution distance.
"""

from __future__ import annotations

import time

import numpy as np

from pintprob import gp, nngp
from pintprob.core import (
    CorrectionDataset,
    IterationRecord,
    RunConfig,
    RunRecord,
    check_finite,
)

__all__ = [
    "sequential_fine",
    "sequential_coarse",
    "parareal_run",
    "gparareal_run",
]


def sequential_fine(system):
    """Fine-solver trajectory at the mesh knots, (N+1, d), normalized.

    This is the verifying truth every benchmark score compares against.
    """
    return _sequential(system, "fine")


def sequential_coarse(system):
    """Coarse-solver trajectory at the mesh knots, (N+1, d), normalized."""
    return _sequential(system, "coarse")


def _sequential(system, which):
    N = system.mesh.N
    traj = np.empty((N + 1, system.dimension))
    traj[0] = system.u0()
    step = system.fine if which == "fine" else system.coarse
    for i in range(N):
        traj[i + 1] = step(traj[i], i)
    return traj


def _advance_front(L, errs, eps, N):
    while L < N and errs[L + 1] < eps:
        L += 1
    return L


def _point_record(k, L, U, errs, timings, **extra):
    N1, d = U.shape
    return IterationRecord(
        k=k,
        L=L,
        means=U.copy(),
        stddevs=np.zeros((N1, d)),
        conv_w2=errs,
        timings=timings,
        ensembles=[U[i][None, :].copy() for i in range(N1)],
        **extra,
    )


def _budget(system, config):
    return (
        config.max_iterations
        if config.max_iterations is not None
        else system.K_stop
    )


def parareal_run(system, config: RunConfig) -> RunRecord:
    N, d = system.mesh.N, system.dimension
    K_stop = _budget(system, config)
    eps = config.epsilon

    t0 = time.perf_counter()
    U_prev = sequential_coarse(system)
    records = [
        _point_record(
            0,
            0,
            U_prev,
            np.full(N + 1, np.nan),
            {"coarse": time.perf_counter() - t0, "fine": 0.0, "gp": 0.0},
        )
    ]

    L = 0
    K_conv = None
    termination = "budget"
    K_end = 0
    for k in range(1, K_stop + 1):
        src = U_prev[L:N]
        t0 = time.perf_counter()
        F_src = system.fine(src, L)
        t_fine = time.perf_counter() - t0
        t0 = time.perf_counter()
        G_src = system.coarse(src, L)
        correction = F_src - G_src

        U_new = U_prev.copy()
        for i in range(L + 1, N + 1):
            U_new[i] = system.coarse(U_new[i - 1], i - 1) + correction[i - 1 - L]
        t_coarse = time.perf_counter() - t0
        check_finite(U_new, iteration=k)

        errs = np.full(N + 1, np.nan)
        diffs = np.abs(U_new[L + 1 :] - U_prev[L + 1 :]).max(axis=1)
        errs[L + 1 :] = diffs
        L = _advance_front(L, errs, eps, N)
        records.append(
            _point_record(
                k, L, U_new, errs, {"coarse": t_coarse, "fine": t_fine, "gp": 0.0}
            )
        )
        K_end = k
        U_prev = U_new
        if L == N:
            K_conv = k
            termination = "converged"
            break

    return RunRecord(
        config=config,
        algorithm="parareal",
        mesh=system.mesh,
        iterations=records,
        dataset=None,
        K_stop=K_stop,
        K_end=K_end,
        K_conv=K_conv,
        termination=termination,
    )


def gparareal_run(system, config: RunConfig) -> RunRecord:
    N, d = system.mesh.N, system.dimension
    K_stop = _budget(system, config)
    eps = config.epsilon
    use_nn = config.neighbor_count is not None
    algorithm = "nngparareal" if use_nn else "gparareal"
    dataset = CorrectionDataset(d)

    t0 = time.perf_counter()
    U_prev = sequential_coarse(system)
    records = [
        _point_record(
            0,
            0,
            U_prev,
            np.full(N + 1, np.nan),
            {"coarse": time.perf_counter() - t0, "fine": 0.0, "gp": 0.0},
        )
    ]

    L = 0
    K_conv = None
    termination = "budget"
    K_end = 0
    model = None  # full-backend warm start
    warm_by_interval = {}  # nn-backend warm start, keyed by source knot
    for k in range(1, K_stop + 1):
        src = U_prev[L:N]
        t0 = time.perf_counter()
        F_src = system.fine(src, L)
        t_fine = time.perf_counter() - t0
        t0 = time.perf_counter()
        G_src = system.coarse(src, L)
        t_coarse = time.perf_counter() - t0
        dataset.extend(src, F_src - G_src, iteration=k)
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

        U_new = U_prev.copy()
        t0 = time.perf_counter()
        nn_hyper = []
        for i in range(L + 1, N + 1):
            q = U_new[i - 1]
            tg0 = time.perf_counter()
            g = system.coarse(q, i - 1)
            t_coarse += time.perf_counter() - tg0
            tm0 = time.perf_counter()
            if use_nn:
                warm = (
                    warm_by_interval.get(i - 1)
                    if config.gp_refit == "warm"
                    else None
                )
                local, _ = nngp.fit_local(
                    X,
                    Y,
                    q,
                    m=config.neighbor_count,
                    kernel=config.kernel,
                    warm_start=warm,
                    index=index,
                    reg_ceiling=gp.taper_ceiling(k),
                )
                warm_by_interval[i - 1] = local
                mu = local.posterior_mean(q)[0]
                nn_hyper.append([i - 1, list(local.thetas)])
            else:
                mu = model.posterior_mean(q)[0]
            t_gp += time.perf_counter() - tm0
            U_new[i] = g + mu
        check_finite(U_new, iteration=k)
        if use_nn:
            hyper = nn_hyper

        errs = np.full(N + 1, np.nan)
        errs[L + 1 :] = np.abs(U_new[L + 1 :] - U_prev[L + 1 :]).max(axis=1)
        L = _advance_front(L, errs, eps, N)
        records.append(
            _point_record(
                k,
                L,
                U_new,
                errs,
                {"coarse": t_coarse, "fine": t_fine, "gp": t_gp},
                gp_hyperparams=hyper,
            )
        )
        K_end = k
        U_prev = U_new
        if L == N:
            K_conv = k
            termination = "converged"
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
