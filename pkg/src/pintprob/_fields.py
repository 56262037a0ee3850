"""Vector-field kernels for the benchmark systems, batched over states.

Every field is evaluated in raw (physical) coordinates on a (B, d) batch.
The integrator handles the affine change of variables to normalized
coordinates.  Fields are dispatched by a small integer id so the whole
right-hand side can live inside one jitted function.

Setting PINTPROB_DISABLE_NUMBA in the environment before import falls back
to pure Python (slow, for debugging only).
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    if os.environ.get("PINTPROB_DISABLE_NUMBA"):
        raise ImportError("numba disabled via PINTPROB_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - debug fallback
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


SYS_FHN = 0
SYS_ROSSLER = 1
SYS_HOPF = 2
SYS_DBLPEND = 3
SYS_LORENZ = 4
SYS_BURGERS = 5


@njit(cache=True)
def eval_field(sys_id, params, U, out):
    """Write the raw-coordinate derivative of each row of U into out.

    FHN (d=2, params a, b, c):
        v' = c (v - v^3/3 + w)
        w' = -(1/c)(v - a + b w)
    Rossler (d=3, params a, b, c):
        x' = -y - z,  y' = x + a y,  z' = b + z (x - c)
    Hopf (d=3, params T), time carried as third coordinate:
        u1' = -u2 + u1 (tau/T - u1^2 - u2^2)
        u2' =  u1 + u2 (tau/T - u1^2 - u2^2)
        tau' = 1
    Double pendulum (d=4, no params), unit masses, lengths, and gravity,
    angles from the downward vertical, state (th1, th2, w1, w2):
        th1' = w1,  th2' = w2
        al = th1 - th2,  den = 3 - cos(2 al)
        w1' = (-3 sin th1 - sin(th1 - 2 th2)
               - 2 sin(al) (w2^2 + w1^2 cos(al))) / den
        w2' = (2 sin(al) (2 w1^2 + 2 cos th1 + w2^2 cos(al))) / den
    Lorenz (d=3, params g1, g2, g3):
        x' = g1 (y - x),  y' = x (g2 - z) - y,  z' = x y - g3 z
    Burgers (any d >= 4, params nu, dx), nodal values on a uniform periodic
    grid, second-order central differences:
        u_l' = nu (u_{l+1} - 2 u_l + u_{l-1}) / dx^2
               - u_l (u_{l+1} - u_{l-1}) / (2 dx)
    """
    B, d = U.shape
    if sys_id == SYS_FHN:
        a, b, c = params[0], params[1], params[2]
        for r in range(B):
            v = U[r, 0]
            w = U[r, 1]
            out[r, 0] = c * (v - v * v * v / 3.0 + w)
            out[r, 1] = -(1.0 / c) * (v - a + b * w)
    elif sys_id == SYS_ROSSLER:
        a, b, c = params[0], params[1], params[2]
        for r in range(B):
            x = U[r, 0]
            y = U[r, 1]
            z = U[r, 2]
            out[r, 0] = -y - z
            out[r, 1] = x + a * y
            out[r, 2] = b + z * (x - c)
    elif sys_id == SYS_HOPF:
        T = params[0]
        for r in range(B):
            u1 = U[r, 0]
            u2 = U[r, 1]
            tau = U[r, 2]
            radial = tau / T - u1 * u1 - u2 * u2
            out[r, 0] = -u2 + u1 * radial
            out[r, 1] = u1 + u2 * radial
            out[r, 2] = 1.0
    elif sys_id == SYS_DBLPEND:
        for r in range(B):
            th1 = U[r, 0]
            th2 = U[r, 1]
            w1 = U[r, 2]
            w2 = U[r, 3]
            al = th1 - th2
            ca = math.cos(al)
            sa = math.sin(al)
            den = 3.0 - math.cos(2.0 * al)
            out[r, 0] = w1
            out[r, 1] = w2
            out[r, 2] = (
                -3.0 * math.sin(th1)
                - math.sin(th1 - 2.0 * th2)
                - 2.0 * sa * (w2 * w2 + w1 * w1 * ca)
            ) / den
            out[r, 3] = (
                2.0 * sa * (2.0 * w1 * w1 + 2.0 * math.cos(th1) + w2 * w2 * ca)
            ) / den
    elif sys_id == SYS_LORENZ:
        g1, g2, g3 = params[0], params[1], params[2]
        for r in range(B):
            x = U[r, 0]
            y = U[r, 1]
            z = U[r, 2]
            out[r, 0] = g1 * (y - x)
            out[r, 1] = x * (g2 - z) - y
            out[r, 2] = x * y - g3 * z
    elif sys_id == SYS_BURGERS:
        nu = params[0]
        dx = params[1]
        inv_dx2 = 1.0 / (dx * dx)
        inv_2dx = 1.0 / (2.0 * dx)
        for r in range(B):
            for l in range(d):
                um = U[r, d - 1] if l == 0 else U[r, l - 1]
                up = U[r, 0] if l == d - 1 else U[r, l + 1]
                u = U[r, l]
                out[r, l] = nu * (up - 2.0 * u + um) * inv_dx2 - u * (
                    up - um
                ) * inv_2dx
    return out


@njit(cache=True)
def rk_step_batch(A, b, sys_id, params, scale, offset, Z, h, steps, K, Yn, Yr):
    """Advance normalized states Z (B, d) in place by `steps` explicit RK steps.

    K (S, B, d), Yn and Yr (B, d) are caller-provided scratch.  The field is
    evaluated in raw coordinates (z * scale + offset); derivatives divide by
    scale so the march stays in normalized coordinates throughout.
    """
    B, d = Z.shape
    S = b.shape[0]
    for _ in range(steps):
        for s in range(S):
            for r in range(B):
                for m in range(d):
                    Yn[r, m] = Z[r, m]
            for q in range(s):
                a_sq = A[s, q]
                if a_sq != 0.0:
                    ha = h * a_sq
                    for r in range(B):
                        for m in range(d):
                            Yn[r, m] += ha * K[q, r, m]
            for r in range(B):
                for m in range(d):
                    Yr[r, m] = Yn[r, m] * scale[m] + offset[m]
            eval_field(sys_id, params, Yr, K[s])
            for r in range(B):
                for m in range(d):
                    K[s, r, m] /= scale[m]
        for s in range(S):
            bs = b[s]
            if bs != 0.0:
                hb = h * bs
                for r in range(B):
                    for m in range(d):
                        Z[r, m] += hb * K[s, r, m]
