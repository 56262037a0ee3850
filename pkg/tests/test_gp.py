"""Gaussian-process regression: kernels, fitting, posterior algebra."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma as gamma_fn
from scipy.special import kv

from pintprob import gp
from pintprob.core import IllConditioned, SizeMismatch


def _dataset(seed, D=12, p=2, d=1):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(D, p))
    Y = np.column_stack(
        [np.sin(3.0 * X[:, 0]) + 0.2 * X[:, s % p] for s in range(d)]
    )
    return X, Y


def _matern_bessel(t, nu):
    # Standard Matern in scaled distance t, unit variance, unit length.
    if t == 0.0:
        return 1.0
    a = math.sqrt(2.0 * nu) * t
    return (2.0 ** (1.0 - nu) / gamma_fn(nu)) * (a**nu) * kv(nu, a)


@pytest.mark.parametrize(
    "kernel,nu", [("matern12", 0.5), ("matern32", 1.5), ("matern52", 2.5)]
)
def test_matern_closed_forms_match_bessel(kernel, nu):
    si, so = 0.7, 2.3
    for dist in (1e-3, 0.1, 0.5, 1.0, 2.0, 5.0):
        u = np.array([dist, 0.0])
        v = np.zeros(2)
        got = gp.kernel_value(kernel, u, v, (si, so, 0.0))
        t = dist / math.sqrt(si)
        np.testing.assert_allclose(got, so * _matern_bessel(t, nu), rtol=1e-12)


def test_gaussian_kernel_value():
    th = (0.5, 3.0, 0.0)
    u, v = np.array([1.0, 2.0]), np.array([1.0, 1.0])
    assert gp.kernel_value("gaussian", u, v, th) == pytest.approx(
        3.0 * math.exp(-1.0 / 0.5), rel=1e-15
    )
    assert gp.kernel_value("gaussian", u, u, th) == 3.0


def test_unknown_kernel_rejected():
    X, Y = _dataset(0)
    with pytest.raises(ValueError):
        gp.fit(X, Y, kernel="cubic")


@pytest.mark.parametrize("kernel", gp.KERNELS)
def test_kernel_matrix_symmetric_psd(kernel):
    X, _ = _dataset(3, D=15, p=3)
    K = gp.kernel_matrix(kernel, X, X, (0.8, 1.7, 0.0))
    np.testing.assert_allclose(K, K.T, atol=1e-14)
    np.testing.assert_allclose(np.diag(K), 1.7)
    w = np.linalg.eigvalsh(K)
    assert w.min() > -1e-10 * 1.7


def test_posterior_matches_dense_solve():
    # The whole point of the Cholesky plumbing is that it reproduces the
    # textbook formulas; check against an explicit solve.
    X, Y = _dataset(7, D=20, p=2)
    y = Y[:, 0]
    theta = (0.6, 1.4, 1e-8 * 1.4)
    model = gp.MultiGP([gp._finalize("matern52", X, y, theta, 0.0)])
    U = np.random.default_rng(11).uniform(-1.0, 1.0, size=(9, 2))

    Kxx = gp.kernel_matrix("matern52", X, X, theta) + theta[2] * np.eye(len(X))
    Kxq = gp.kernel_matrix("matern52", X, U, theta)
    mean_ref = Kxq.T @ np.linalg.solve(Kxx, y)
    var_ref = theta[1] - np.einsum(
        "ij,ij->j", Kxq, np.linalg.solve(Kxx, Kxq)
    )
    M, V = model.posterior(U)
    np.testing.assert_allclose(M[:, 0], mean_ref, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(V[:, 0], np.maximum(var_ref, 0.0), rtol=1e-8, atol=1e-12)


def test_fit_interpolates_noise_free_data():
    X, Y = _dataset(1, D=15, d=2)
    model = gp.fit(X, Y, kernel="gaussian")
    M, V = model.posterior(X)
    np.testing.assert_allclose(M, Y, atol=1e-5)
    # Fitted regularizer is capped well below the output scale, so the
    # variance at training inputs stays tiny compared to it.
    for g, col in zip(model.parts, range(2)):
        assert V[:, col].max() <= 1e-5 * g.theta[1]


def test_fitted_hyperparams_positive_and_reg_bounded():
    X, Y = _dataset(5, D=18, d=2)
    model = gp.fit(X, Y, kernel="matern32")
    for s, g in enumerate(model.parts):
        si, so, sr = g.theta
        assert si > 0 and so > 0 and sr > 0
        # Default ceiling keeps regularization at conditioning grade.
        assert sr <= 1e-4 * np.var(Y[:, s]) * (1.0 + 1e-12)


def test_reg_ceiling_honored_and_validated():
    X, Y = _dataset(5, D=18)
    loose = gp.fit(X, Y, reg_ceiling=1.0)
    var_y = np.var(Y[:, 0])
    assert loose.parts[0].theta[2] <= var_y * (1.0 + 1e-12)
    with pytest.raises(ValueError):
        gp.fit(X, Y, reg_ceiling=2.0)
    with pytest.raises(ValueError):
        gp.fit(X, Y, reg_ceiling=0.0)


def test_zero_targets_fit_terminates_and_predicts_zero():
    # F - G is exactly zero when both solvers coincide.  The marginal
    # likelihood is unbounded as the output scale shrinks on such data,
    # so the search must stop at its box instead of descending into
    # subnormals (where the jitter ladder used to underflow and spin).
    rng = np.random.default_rng(3)
    X = rng.normal(size=(6, 2))
    model = gp.fit(X, np.zeros((6, 2)), reg_ceiling=1.0)
    U = rng.normal(size=(4, 2))
    M, V = model.posterior(U)
    np.testing.assert_array_equal(M, 0.0)
    assert np.all(V <= 1e-12)
    for g in model.parts:
        assert g.theta[1] > 0


def test_taper_ceiling_schedule():
    assert gp.taper_ceiling(1) == 1.0
    vals = [gp.taper_ceiling(k) for k in range(1, 12)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == 1e-8
    assert gp.taper_ceiling(3) == pytest.approx(1e-4)
    with pytest.raises(ValueError):
        gp.taper_ceiling(0)


def test_far_field_reverts_to_prior():
    X, Y = _dataset(2)
    model = gp.fit(X, Y, kernel="gaussian")
    far = np.full((1, 2), 1e3)
    M, V = model.posterior(far)
    so = model.parts[0].theta[1]
    assert abs(M[0, 0]) < 1e-6 * math.sqrt(so)
    np.testing.assert_allclose(V[0, 0], so, rtol=1e-10)


def test_posterior_mean_linear_in_targets():
    X, Y = _dataset(9, D=14)
    y1 = Y[:, 0]
    y2 = np.cos(2.0 * X[:, 1])
    theta = (0.5, 1.0, 1e-9)
    f = lambda y: gp._finalize("gaussian", X, y, theta, 0.0)
    U = np.random.default_rng(4).uniform(-1, 1, size=(6, 2))
    lhs = f(3.0 * y1 - 2.0 * y2).posterior(U)[0]
    rhs = 3.0 * f(y1).posterior(U)[0] - 2.0 * f(y2).posterior(U)[0]
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)


def test_added_observation_shrinks_variance():
    # Conditioning on more noise-free data never increases posterior
    # variance when hyperparameters are held fixed.
    X, Y = _dataset(13, D=10)
    y = Y[:, 0]
    theta = (0.8, 1.2, 1e-9)
    U = np.linspace(-1.0, 1.0, 21)[:, None] * np.ones((1, 2))
    small = gp._finalize("matern52", X[:-1], y[:-1], theta, 0.0)
    full = gp._finalize("matern52", X, y, theta, 0.0)
    _, v_small = small.posterior(U)
    _, v_full = full.posterior(U)
    assert (v_full <= v_small + 1e-12).all()


def test_posterior_invariant_under_row_permutation():
    X, Y = _dataset(21, D=16)
    y = Y[:, 0]
    theta = (0.6, 1.0, 1e-9)
    perm = np.random.default_rng(0).permutation(len(X))
    a = gp._finalize("gaussian", X, y, theta, 0.0)
    b = gp._finalize("gaussian", X[perm], y[perm], theta, 0.0)
    U = np.random.default_rng(1).uniform(-1, 1, size=(7, 2))
    np.testing.assert_allclose(a.posterior(U)[0], b.posterior(U)[0], atol=1e-10)
    np.testing.assert_allclose(a.posterior(U)[1], b.posterior(U)[1], atol=1e-10)


def test_warm_start_roundtrip():
    X, Y = _dataset(17, d=2)
    first = gp.fit(X, Y, kernel="gaussian")
    again = gp.fit(X, Y, kernel="gaussian", warm_start=first)
    # Warm start only adds candidates, so the refit can not score worse.
    for g0, g1 in zip(first.parts, again.parts):
        assert g1.mll >= g0.mll - 1e-9
    with pytest.raises(SizeMismatch):
        gp.fit(X, Y[:, :1], kernel="gaussian", warm_start=first)


def test_fit_shape_validation():
    X, Y = _dataset(0)
    with pytest.raises(SizeMismatch):
        gp.fit(X, Y[:-1])
    with pytest.raises(SizeMismatch):
        gp.fit(X[:0], Y[:0])
    with pytest.raises(SizeMismatch):
        gp.fit(X, Y).posterior(np.zeros((3, 5)))


def test_single_observation_fit():
    X = np.array([[0.2, -0.3]])
    y = np.array([0.7])
    model = gp.fit(X, y, kernel="gaussian")
    M, V = model.posterior(X)
    np.testing.assert_allclose(M[0, 0], 0.7, rtol=1e-6)
    assert V[0, 0] <= 1e-6 * model.parts[0].theta[1]


def test_negative_variance_alarm_and_clamp():
    # A deliberately inconsistent factor forces the quadratic form past
    # sigma_o2; the clamp must fire the alarm and return exactly zero.
    X = np.array([[0.0]])
    bad = gp.FittedGP(
        kernel="gaussian",
        X=X,
        y=np.array([1.0]),
        theta=(1.0, 1.0, 0.0),
        L=np.array([[0.1]]),
        alpha=np.array([1.0]),
        mll=0.0,
    )
    with pytest.warns(gp.NegativeVarianceAlarm):
        _, V = bad.posterior(X)
    assert V[0] == 0.0


def test_jitter_ladder_exhaustion():
    K = np.array([[-1.0]])
    with pytest.raises(IllConditioned):
        gp._chol_regularized(K, 1.0, 0.0)


def test_duplicate_rows_survive_via_jitter():
    X = np.vstack([np.zeros((2, 2)), _dataset(8, D=8)[0]])
    y = np.sin(X[:, 0]) + X[:, 1]
    model = gp.fit(X, y, kernel="gaussian")
    M, _ = model.posterior(np.array([[0.5, 0.5]]))
    assert np.isfinite(M).all()


def test_sample_correction_moments_and_determinism():
    X, Y = _dataset(6, d=2)
    model = gp.fit(X, Y, kernel="gaussian")
    U = np.array([[0.1, 0.2], [5.0, 5.0]])
    z1 = gp.sample_correction(model, U, np.random.default_rng(42))
    z2 = gp.sample_correction(model, U, np.random.default_rng(42))
    np.testing.assert_array_equal(z1, z2)

    M, V = model.posterior(U)
    draws = np.stack(
        [
            gp.sample_correction(model, U, np.random.default_rng(1000 + r))
            for r in range(4000)
        ]
    )
    np.testing.assert_allclose(draws.mean(axis=0), M, atol=4.0 * np.sqrt(V.max() / 4000) + 1e-12)
    np.testing.assert_allclose(
        draws.var(axis=0, ddof=1), V, rtol=0.15, atol=1e-12
    )


@settings(max_examples=40, deadline=None)
@given(
    st.integers(min_value=0, max_value=3),
    st.floats(min_value=0.05, max_value=5.0),
    st.floats(min_value=0.05, max_value=5.0),
)
def test_kernel_symmetry_and_bounds(kidx, si, so):
    kernel = gp.KERNELS[kidx]
    rng = np.random.default_rng(kidx)
    u, v = rng.normal(size=2), rng.normal(size=2)
    a = gp.kernel_value(kernel, u, v, (si, so, 0.0))
    b = gp.kernel_value(kernel, v, u, (si, so, 0.0))
    assert a == b
    assert 0.0 < a <= so + 1e-15
    assert gp.kernel_value(kernel, u, u, (si, so, 0.0)) == pytest.approx(so)
