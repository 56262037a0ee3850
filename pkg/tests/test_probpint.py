"""Ensemble solver: ancestral updates, Wasserstein scans, exit policy."""

import itertools

import numpy as np
import pytest

from pintprob import pint, probpint
from pintprob.core import SizeMismatch, standard_normal_block
from pintprob.probpint import (
    ExitCondition,
    GaussianSummary,
    InitialDistribution,
    ancestral_step,
    prob_run,
    summarize,
    w2_exact,
    w2_gaussian,
)
from test_pint import _cfg, _toy, _toy_exact


def test_summarize_moments_and_single_member():
    s = summarize([[0.0, 0.0], [2.0, 2.0]])
    np.testing.assert_allclose(s.mean, [1.0, 1.0])
    np.testing.assert_allclose(s.stddev, [np.sqrt(2.0), np.sqrt(2.0)])
    lone = summarize([[3.0, -1.0]])
    np.testing.assert_array_equal(lone.mean, [3.0, -1.0])
    np.testing.assert_array_equal(lone.stddev, [0.0, 0.0])


def test_w2_gaussian_hand_value():
    # ||(3,4)||^2 + (1-1)^2 + (0-2)^2 = 25 + 4
    a = GaussianSummary(np.array([0.0, 0.0]), np.array([1.0, 2.0]))
    b = GaussianSummary(np.array([3.0, 4.0]), np.array([1.0, 0.0]))
    assert w2_gaussian(a, b) == pytest.approx(29.0)
    assert w2_gaussian(b, a) == pytest.approx(29.0)
    assert w2_gaussian(a, a) == 0.0


def test_w2_exact_matches_brute_force_assignment():
    rng = np.random.default_rng(5)
    for p in (1, 2):
        A = rng.normal(size=(4, 2))
        B = rng.normal(size=(4, 2))
        best = min(
            sum(
                np.linalg.norm(A[i] - B[j]) ** p
                for i, j in enumerate(perm)
            )
            for perm in itertools.permutations(range(4))
        )
        assert w2_exact(A, B, p=p) == pytest.approx(best / 4.0)
    assert w2_exact(A, A) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(SizeMismatch):
        w2_exact(A, B[:3])


def test_initial_distribution_kinds():
    center = np.array([1.0, -2.0])
    dirac = InitialDistribution(center=center, sigma=0.0)
    assert dirac.kind == "dirac"
    S = dirac.sample(seed=7, n=5)
    np.testing.assert_array_equal(S, np.tile(center, (5, 1)))

    spread = InitialDistribution(center=center, sigma=0.5)
    assert spread.kind == "gaussian"
    S = spread.sample(seed=7, n=5)
    expected = center + 0.5 * standard_normal_block(7, 0, 0, 5, 2)
    np.testing.assert_array_equal(S, expected)
    assert not np.array_equal(S, spread.sample(seed=8, n=5))


class _AffineSystem:
    """Stub propagator G(u) = a * u + b, applied member-wise."""

    def __init__(self, a, b):
        self.a = np.asarray(a, float)
        self.b = np.asarray(b, float)

    def coarse(self, U, start):
        return self.a * np.atleast_2d(U) + self.b


class _ConstModel:
    """Stub emulator with position-independent posterior."""

    def __init__(self, M, V):
        self.M = np.asarray(M, float)
        self.V = np.asarray(V, float)

    def posterior(self, U):
        n = np.atleast_2d(U).shape[0]
        return np.tile(self.M, (n, 1)), np.tile(self.V, (n, 1))


def test_ancestral_step_is_coarse_plus_posterior_draw():
    rng = np.random.default_rng(11)
    S = rng.normal(size=(6, 2))
    system = _AffineSystem([2.0, -0.5], [0.1, 0.2])
    model = _ConstModel([1.0, -1.0], [0.04, 0.25])
    out = ancestral_step(system, model, S, target=3, k=2, seed=9)
    noise = standard_normal_block(9, 3, 2, 6, 2)
    expected = system.coarse(S, 2) + model.M + np.sqrt(model.V) * noise
    np.testing.assert_array_equal(out, expected)
    # The deterministic limit drops the noise term entirely.
    flat = ancestral_step(
        system, model, S, target=3, k=2, seed=9, zero_variance=True
    )
    np.testing.assert_array_equal(flat, system.coarse(S, 2) + model.M)


def test_ancestral_step_affine_moment_propagation():
    # Affine map plus independent Gaussian correction: the output moments
    # are mean -> a*mean + b + M and var -> a^2 var + V, up to Monte Carlo
    # error in the realized noise block.
    rng = np.random.default_rng(2)
    n = 4000
    S = rng.normal(loc=1.0, scale=0.3, size=(n, 2))
    a, b = np.array([1.5, -0.8]), np.array([0.0, 2.0])
    M, V = np.array([0.5, -0.25]), np.array([0.09, 0.16])
    out = ancestral_step(_AffineSystem(a, b), _ConstModel(M, V), S, 1, 1, 0)
    want_mean = a * S.mean(axis=0) + b + M
    want_std = np.sqrt(a * a * S.var(axis=0, ddof=1) + V)
    np.testing.assert_allclose(out.mean(axis=0), want_mean, atol=0.05)
    np.testing.assert_allclose(out.std(axis=0, ddof=1), want_std, rtol=0.05)


def test_identical_solvers_push_initial_ensemble_forward():
    # With F == G every correction is exactly zero, so the run is just the
    # coarse pushforward of the initial cloud, member by member.
    s = _toy_exact()
    cfg = _cfg(
        n_samples=32, sigma_init=1e-3, epsilon=1e-300, max_iterations=2
    )
    rr = prob_run(s, cfg, zero_variance=True)
    ens0 = rr.iterations[-1].ensembles[0]
    expected = ens0
    for i in range(s.mesh.N):
        expected = s.coarse(expected, i)
        got = rr.iterations[-1].ensembles[i + 1]
        np.testing.assert_array_equal(got, expected)


def test_identical_solvers_dirac_start_collapses_spread():
    s = _toy_exact()
    rr = prob_run(s, _cfg(n_samples=8, epsilon=1e-7))
    assert rr.termination == "converged"
    assert rr.K_conv == 1
    worst = max(float(rec.stddevs.max()) for rec in rr.iterations)
    assert worst < 1e-6


def test_zero_variance_limit_matches_deterministic_solver():
    # Means-only draws, a single member, and a point start reduce the
    # ensemble method to the deterministic one; with convergence disabled
    # on both sides the trajectories agree bit for bit.
    s = _toy()
    cfg = _cfg(epsilon=1e-300, max_iterations=3)
    rp = prob_run(s, cfg, zero_variance=True)
    rg = pint.gparareal_run(s, cfg)
    assert rp.K_end == rg.K_end == 3
    for rec_p, rec_g in zip(rp.iterations, rg.iterations):
        np.testing.assert_array_equal(rec_p.means, rec_g.means)
    np.testing.assert_array_equal(rp.dataset.inputs, rg.dataset.inputs)
    np.testing.assert_array_equal(rp.dataset.outputs, rg.dataset.outputs)


def test_spread_requires_at_least_two_members():
    s = _toy()
    with pytest.raises(ValueError):
        prob_run(s, _cfg(n_samples=1))
    with pytest.raises(ValueError):
        prob_run(s, _cfg(n_samples=1, sigma_init=1e-3), zero_variance=True)


def _check(cond, **kw):
    kw.setdefault("k", 1)
    kw.setdefault("L", 0)
    kw.setdefault("N", 4)
    kw.setdefault("stddevs", np.zeros((5, 2)))
    kw.setdefault("plateau_history", [])
    return cond.check(**kw)


def test_exit_condition_precedence():
    cond = ExitCondition(K_stop=3, variance_cap=1.0, plateau_window=1)
    # A full front wins over every other reason.
    big = np.full((5, 2), 9.0)
    assert _check(cond, L=4, stddevs=big, plateau_history=[1.0]) == "converged"
    # The cap wins over plateau and budget.
    assert (
        _check(cond, k=3, stddevs=big, plateau_history=[1.0])
        == "variance-cap"
    )
    # Plateau wins over budget.
    assert _check(cond, k=3, plateau_history=[1.0]) == "variance-plateau"
    assert _check(ExitCondition(K_stop=3), k=3) == "budget"
    assert _check(ExitCondition(K_stop=3), k=2) is None


def test_variance_cap_ignores_frozen_knots():
    cond = ExitCondition(K_stop=9, variance_cap=1.0)
    sd = np.zeros((5, 2))
    sd[1] = 50.0
    assert _check(cond, L=2, stddevs=sd) is None
    sd[4] = 50.0
    assert _check(cond, L=2, stddevs=sd) == "variance-cap"


def test_plateau_needs_full_window_and_real_decay_resets_it():
    cond = ExitCondition(K_stop=9, plateau_window=3, plateau_rel_tol=0.05)
    assert _check(cond, plateau_history=[1.0, 0.99]) is None
    assert (
        _check(cond, plateau_history=[1.0, 0.99, 0.98]) == "variance-plateau"
    )
    # A meaningful drop over the window keeps the run alive.
    assert _check(cond, plateau_history=[1.0, 0.5, 0.2]) is None


def test_plateau_fires_in_a_stalled_run():
    s = _toy()
    rr = prob_run(
        s,
        _cfg(
            n_samples=4,
            epsilon=1e-300,
            plateau_window=1,
            max_iterations=6,
        ),
    )
    assert rr.termination == "variance-plateau"
    assert rr.K_end < 6


def test_record_layout_and_nn_backend():
    s = _toy()
    rr = prob_run(s, _cfg(n_samples=4, max_iterations=2, epsilon=1e-300))
    assert rr.algorithm == "prob-gparareal"
    N = s.mesh.N
    for rec in rr.iterations:
        assert len(rec.ensembles) == N + 1
        assert rec.means.shape == (N + 1, 2)
        assert set(rec.timings) == {"coarse", "fine", "gp"}
    k1 = rr.iterations[1]
    assert np.isnan(k1.conv_w2[0])
    assert np.isfinite(k1.conv_w2[1:]).all()
    assert len(k1.gp_hyperparams) == 2

    rn = prob_run(s, _cfg(n_samples=4, max_iterations=2, neighbor_count=4))
    assert rn.algorithm == "prob-nngparareal"
    for interval, thetas in rn.iterations[-1].gp_hyperparams:
        assert 0 <= interval < N
        assert len(thetas) == 2
