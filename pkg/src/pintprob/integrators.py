"""Fixed-step explicit Runge-Kutta integrators.

Orders 1, 2, 4, and 8 cover every coarse/fine solver role used by the
benchmark systems.  Order 8 uses the 11-stage Cooper-Verner tableau, whose
coefficients are rational expressions in sqrt(21); it is applied with a
fixed step (no error control).  Tableau consistency (stage values equal
row sums, weights sum to one) is asserted at import time.

Two execution paths exist with identical semantics:

* :func:`integrate` takes any Python callable field and marches one state.
  It is the reference implementation used by tests and one-off evaluation.
* :func:`propagate_normalized` marches a whole (B, d) batch of normalized
  states through a jitted kernel dispatched on a system id.  The solvers
  use this path together with :func:`coarse_propagate` /
  :func:`fine_propagate`.

Fields are autonomous: non-autonomous systems append time as an extra
coordinate with unit derivative (the Hopf entry in the systems registry
does exactly this).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pintprob import _fields
from pintprob.core import NonFiniteState, check_finite

__all__ = [
    "SCHEMES",
    "tableau",
    "SolverPair",
    "integrate",
    "propagate_normalized",
    "coarse_propagate",
    "fine_propagate",
]


def _euler():
    return np.zeros((1, 1)), np.array([1.0]), np.array([0.0])


def _heun():
    A = np.zeros((2, 2))
    A[1, 0] = 1.0
    return A, np.array([0.5, 0.5]), np.array([0.0, 1.0])


def _classic_rk4():
    A = np.zeros((4, 4))
    A[1, 0] = 0.5
    A[2, 1] = 0.5
    A[3, 2] = 1.0
    b = np.array([1.0, 2.0, 2.0, 1.0]) / 6.0
    c = np.array([0.0, 0.5, 0.5, 1.0])
    return A, b, c


def _cooper_verner8():
    q = math.sqrt(21.0)
    A = np.zeros((11, 11))
    A[1, :1] = [1 / 2]
    A[2, :2] = [1 / 4, 1 / 4]
    A[3, :3] = [1 / 7, (-7 - 3 * q) / 98, (21 + 5 * q) / 49]
    A[4, :4] = [(11 + q) / 84, 0, (18 + 4 * q) / 63, (21 - q) / 252]
    A[5, :5] = [
        (5 + q) / 48,
        0,
        (9 + q) / 36,
        (-231 + 14 * q) / 360,
        (63 - 7 * q) / 80,
    ]
    A[6, :6] = [
        (10 - q) / 42,
        0,
        (-432 + 92 * q) / 315,
        (633 - 145 * q) / 90,
        (-504 + 115 * q) / 70,
        (63 - 13 * q) / 35,
    ]
    A[7, :7] = [1 / 14, 0, 0, 0, (14 - 3 * q) / 126, (13 - 3 * q) / 63, 1 / 9]
    A[8, :8] = [
        1 / 32,
        0,
        0,
        0,
        (91 - 21 * q) / 576,
        11 / 72,
        (-385 - 75 * q) / 1152,
        (63 + 13 * q) / 128,
    ]
    A[9, :9] = [
        1 / 14,
        0,
        0,
        0,
        1 / 9,
        (-733 - 147 * q) / 2205,
        (515 + 111 * q) / 504,
        (-51 - 11 * q) / 56,
        (132 + 28 * q) / 245,
    ]
    A[10, :10] = [
        0,
        0,
        0,
        0,
        (-42 + 7 * q) / 18,
        (-18 + 28 * q) / 45,
        (-273 - 53 * q) / 72,
        (301 + 53 * q) / 72,
        (28 - 28 * q) / 45,
        (49 - 7 * q) / 18,
    ]
    b = np.array([1 / 20, 0, 0, 0, 0, 0, 0, 49 / 180, 16 / 45, 49 / 180, 1 / 20])
    c = np.array(
        [
            0,
            1 / 2,
            1 / 2,
            (7 + q) / 14,
            (7 + q) / 14,
            1 / 2,
            (7 - q) / 14,
            (7 - q) / 14,
            1 / 2,
            (7 + q) / 14,
            1,
        ]
    )
    return A, b, c


SCHEMES = {
    "rk1": _euler(),
    "rk2": _heun(),
    "rk4": _classic_rk4(),
    "rk8": _cooper_verner8(),
}

SCHEME_ORDER = {"rk1": 1, "rk2": 2, "rk4": 4, "rk8": 8}


def tableau(scheme: str):
    """Return (A, b, c) for a scheme name in {rk1, rk2, rk4, rk8}."""
    try:
        return SCHEMES[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}, have {sorted(SCHEMES)}")


def tableau_residual(scheme: str) -> float:
    """Max deviation of the consistency conditions c = rowsum(A), sum(b) = 1."""
    A, b, c = tableau(scheme)
    return max(float(np.abs(A.sum(axis=1) - c).max()), abs(float(b.sum()) - 1.0))


for _name in SCHEMES:
    _res = tableau_residual(_name)
    if _res > 1e-14:
        raise AssertionError(f"inconsistent tableau {_name}: residual {_res}")


@dataclass(frozen=True)
class SolverPair:
    """Coarse and fine scheme with their per-interval step counts."""

    coarse_scheme: str
    coarse_steps: int
    fine_scheme: str
    fine_steps: int

    def __post_init__(self):
        tableau(self.coarse_scheme)
        tableau(self.fine_scheme)
        if self.coarse_steps < 1 or self.fine_steps < 1:
            raise ValueError("step counts must be >= 1")
        if self.fine_steps < self.coarse_steps:
            raise ValueError(
                "fine solver must take at least as many steps as the coarse one"
            )

    def role(self, which: str):
        if which == "coarse":
            return self.coarse_scheme, self.coarse_steps
        if which == "fine":
            return self.fine_scheme, self.fine_steps
        raise ValueError(f"role must be 'coarse' or 'fine', got {which!r}")


def integrate(scheme, field, u0, t_start, t_end, steps):
    """March u0 with `steps` uniform explicit-RK steps of the given scheme.

    Parameters
    ----------
    scheme : str
        One of "rk1", "rk2", "rk4", "rk8".
    field : callable
        Autonomous right-hand side: field(u) -> du/dt, both shape (d,).
    u0 : array_like, shape (d,)
    t_start, t_end : float
    steps : int
        Number of steps; the step size is (t_end - t_start) / steps.

    Returns
    -------
    ndarray, shape (d,)

    Raises
    ------
    NonFiniteState
        If the state stops being finite at any step (blow-up).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    A, b, c = tableau(scheme)
    S = b.shape[0]
    h = (t_end - t_start) / steps
    u = np.array(u0, dtype=np.float64)
    K = np.empty((S,) + u.shape)
    for _ in range(steps):
        for s in range(S):
            y = u.copy()
            for q in range(s):
                if A[s, q] != 0.0:
                    y += (h * A[s, q]) * K[q]
            K[s] = field(y)
        for s in range(S):
            if b[s] != 0.0:
                u = u + (h * b[s]) * K[s]
        if not np.isfinite(u).all():
            raise NonFiniteState("integration blew up (non-finite state)")
    return u


def propagate_normalized(scheme, steps, sys_int, params, scale, offset, Z, h_total):
    """Advance a (B, d) batch of normalized states over one mesh interval.

    ``h_total`` is the interval length; the scheme takes ``steps`` equal
    steps of size h_total / steps.  Returns a fresh array; the input is not
    modified.  Finiteness of the result is the caller's check (use
    :func:`pintprob.core.check_finite`), since NaN/Inf propagate to the
    interval end under IEEE arithmetic.
    """
    A, b, _c = tableau(scheme)
    Z = np.array(Z, dtype=np.float64, order="C")
    single = Z.ndim == 1
    if single:
        Z = Z.reshape(1, -1)
    S = b.shape[0]
    B, d = Z.shape
    K = np.empty((S, B, d))
    Yn = np.empty((B, d))
    Yr = np.empty((B, d))
    _fields.rk_step_batch(
        A,
        b,
        sys_int,
        np.asarray(params, dtype=np.float64),
        np.asarray(scale, dtype=np.float64),
        np.asarray(offset, dtype=np.float64),
        Z,
        h_total / steps,
        steps,
        K,
        Yn,
        Yr,
    )
    return Z[0] if single else Z


def _propagate(pair, system, u, interval, which):
    scheme, steps = pair.role(which)
    out = propagate_normalized(
        scheme,
        steps,
        system.sys_int,
        system.params,
        system.scale,
        system.offset,
        u,
        system.mesh.dt,
    )
    check_finite(out, interval=interval)
    return out


def coarse_propagate(pair, system, u, interval):
    """Coarse solver over [t_i, t_{i+1}] in normalized coordinates.

    ``u`` may be one state (d,) or a batch (B, d); the output matches.
    """
    return _propagate(pair, system, u, interval, "coarse")


def fine_propagate(pair, system, u, interval):
    """Fine solver over [t_i, t_{i+1}]; same contract as coarse_propagate."""
    return _propagate(pair, system, u, interval, "fine")
