"""Coverage diagnostics: local fill distance and HDR representatives."""

import numpy as np
import pytest

from pintprob import probpint
from pintprob.core import SizeMismatch
from pintprob.diagnostics import (
    DegenerateEnsemble,
    fill_distance_sweep,
    hdr_representatives,
    local_fill_distance,
)
from test_pint import _cfg, _toy


def test_one_point_dataset_is_exact():
    # Ball radius equals the distance to the lone observation, and the
    # farthest ball point from it lies straight across: h = 2 * dist.
    h = local_fill_distance(np.array([[0.0, 0.0]]), np.array([2.0, 0.0]))
    assert h == pytest.approx(4.0, rel=1e-12)
    h = local_fill_distance(np.array([[1.0, 1.0]]), np.array([4.0, 5.0]))
    assert h == pytest.approx(10.0, rel=1e-12)


def test_center_on_a_row_gives_zero():
    X = np.array([[0.0, 0.0], [1.0, 3.0]])
    assert local_fill_distance(X, np.array([1.0, 3.0])) == 0.0


def test_extra_rows_never_hurt_coverage():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(5, 2))
    center = np.array([2.0, 2.0])
    h1 = local_fill_distance(X, center)
    # Far rows leave the ball unchanged; the min over a larger dataset
    # can only shrink.
    far = center + np.array([[50.0, 0.0], [0.0, -75.0]])
    h2 = local_fill_distance(np.vstack([X, far]), center)
    assert h2 <= h1
    # A row next to the center shrinks the ball itself.
    h3 = local_fill_distance(np.vstack([X, center + 0.01]), center)
    assert h3 < 0.1 * h1


def test_fill_distance_is_deterministic():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(7, 3))
    c = np.array([0.5, -0.5, 1.5])
    assert local_fill_distance(X, c) == local_fill_distance(X, c)


def test_fill_distance_checks_dimensions():
    with pytest.raises(SizeMismatch):
        local_fill_distance(np.zeros((3, 2)), np.zeros(3))


def test_hdr_picks_straddle_the_boundary():
    # One live coordinate: mean 2, sd sqrt(2.5), z^2 = (1.6, .4, 0, .4, 1.6).
    # At alpha = 0.5 the chi-square threshold is 0.4549, so members 1 and 0
    # are the first inside/outside picks; the flat coordinate rides along.
    samples = np.array([[0.0, 7.0], [1.0, 7.0], [2.0, 7.0], [3.0, 7.0], [4.0, 7.0]])
    reps = hdr_representatives(samples, 0.5)
    np.testing.assert_array_equal(reps, samples[[1, 0]])


def test_hdr_falls_back_when_everyone_is_inside():
    samples = np.array([[0.0], [1.0], [2.0], [3.0], [4.0]])
    reps = hdr_representatives(samples, 0.999)
    np.testing.assert_array_equal(reps, samples[[0, 4]])


def test_hdr_alpha_validation():
    samples = np.zeros((3, 2))
    for bad in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(ValueError):
            hdr_representatives(samples, bad)


def test_hdr_degenerate_ensemble_warns_and_returns_mean():
    samples = np.tile([1.5, -2.5], (4, 1))
    with pytest.warns(DegenerateEnsemble):
        reps = hdr_representatives(samples, 0.5)
    np.testing.assert_array_equal(reps, np.tile([1.5, -2.5], (2, 1)))


def test_sweep_layout_over_a_short_run():
    s = _toy()
    rr = probpint.prob_run(
        s, _cfg(n_samples=4, epsilon=1e-300, max_iterations=2)
    )
    out = fill_distance_sweep(rr, alphas=(0.5, 0.9), n_probes=16)
    assert set(out) == {0.5, 0.9}
    for a in (0.5, 0.9):
        assert set(out[a]) == {1, 2}
        for v in out[a].values():
            assert np.isfinite(v) and v >= 0.0


def test_sweep_requires_a_dataset():
    from pintprob import pint

    s = _toy()
    rr = pint.parareal_run(s, _cfg())
    with pytest.raises(ValueError):
        fill_distance_sweep(rr)
