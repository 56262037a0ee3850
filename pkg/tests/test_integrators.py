"""Fixed-step Runge-Kutta schemes and the coarse/fine solver pairing."""

import math

import numpy as np
import pytest

from pintprob import integrators, systems
from pintprob.core import NonFiniteState
from pintprob.integrators import (
    SCHEME_ORDER,
    SCHEMES,
    SolverPair,
    integrate,
    tableau,
    tableau_residual,
)


@pytest.mark.parametrize("scheme", sorted(SCHEMES))
def test_tableau_consistency(scheme):
    A, b, c = tableau(scheme)
    stages = len(b)
    assert A.shape == (stages, stages)
    # explicit: strictly lower triangular
    assert np.allclose(A, np.tril(A, -1))
    # row sums reproduce the abscissae, weights sum to one
    np.testing.assert_allclose(A.sum(axis=1), c, atol=1e-14)
    assert abs(b.sum() - 1.0) < 1e-14
    assert tableau_residual(scheme) <= 1e-14


def test_scheme_orders_declared():
    assert SCHEME_ORDER == {"rk1": 1, "rk2": 2, "rk4": 4, "rk8": 8}


def test_exponential_oracle():
    # u' = u, u(0)=1: single step of rk4 reproduces the degree-4 Taylor
    # polynomial of e^h exactly.
    h = 0.1
    got = integrate("rk4", lambda u: u, np.array([1.0]), 0.0, h, 1)
    taylor = sum(h**p / math.factorial(p) for p in range(5))
    assert abs(got[0] - taylor) < 1e-16
    # and over [0, 1] with 50 steps the global error is tiny
    got = integrate("rk4", lambda u: u, np.array([1.0]), 0.0, 1.0, 50)
    assert abs(got[0] - math.e) < 1e-8


@pytest.mark.parametrize(
    "scheme,steps",
    [
        ("rk1", (64, 128, 256, 512)),
        ("rk2", (32, 64, 128, 256)),
        ("rk4", (8, 16, 32, 64)),
        ("rk8", (2, 3, 4, 6)),
    ],
)
def test_convergence_order(scheme, steps):
    # u' = u*cos(t) autonomized with a clock coordinate; closed form
    # u(t) = exp(sin(t)).
    field = lambda u: np.array([u[0] * np.cos(u[1]), 1.0])
    exact = math.exp(math.sin(2.0))
    errs = []
    for n in steps:
        got = integrate(scheme, field, np.array([1.0, 0.0]), 0.0, 2.0, n)
        errs.append(abs(got[0] - exact))
    slopes = [
        math.log(errs[i] / errs[i + 1])
        / math.log(steps[i + 1] / steps[i])
        for i in range(len(steps) - 1)
    ]
    slope = np.median(slopes)
    order = SCHEME_ORDER[scheme]
    # At least the design order; leading-term cancellation on smooth
    # problems can make the observed slope steeper, never shallower.
    assert slope >= order * 0.85
    assert slope <= order * 1.9


def test_integrate_raises_on_blowup():
    # u' = u^2 with u(0)=1 blows up at t=1; crossing it must raise rather
    # than return inf silently.
    with pytest.raises(NonFiniteState):
        integrate("rk1", lambda u: u * u, np.array([1.0]), 0.0, 4.0, 40)


class TestSolverPair:
    def test_role_lookup(self):
        pair = SolverPair("rk2", 4, "rk4", 4000)
        assert pair.role("coarse") == ("rk2", 4)
        assert pair.role("fine") == ("rk4", 4000)
        with pytest.raises(ValueError):
            pair.role("medium")

    def test_fine_must_not_be_coarser(self):
        with pytest.raises(ValueError):
            SolverPair("rk4", 100, "rk4", 10)

    def test_unknown_scheme_rejected(self):
        with pytest.raises(ValueError):
            SolverPair("rk3", 10, "rk4", 100)


def test_batched_matches_reference_path():
    """The compiled batch propagator and the pure-python reference
    integrator walk the same arithmetic."""
    s = systems.get_system("fhn")
    rng = np.random.default_rng(0)
    Z = rng.uniform(-0.5, 0.5, size=(7, s.dimension))
    batched = s.coarse(Z, 0)
    scheme, steps = s.pair.role("coarse")
    for row in range(Z.shape[0]):
        ref = integrate(
            scheme, s.normalized_field, Z[row], 0.0, s.mesh.dt, steps
        )
        np.testing.assert_allclose(batched[row], ref, rtol=0, atol=1e-13)


def test_batched_single_state_shape():
    s = systems.get_system("fhn")
    z = np.array([0.1, -0.2])
    out = s.coarse(z, 0)
    assert out.shape == z.shape
