"""Benchmark system registry.

Each entry bundles the vector field id, parameters, time mesh, initial
state, coarse/fine solver pair, iteration budget, and the per-coordinate
affine normalization used by the solvers and the GP emulator.  Systems are
looked up by string id; see :func:`available_systems`.

Normalization constants live in ``normalization.json`` next to this module.
They were produced once by :func:`regenerate_normalization`, which runs the
fine solver over the full horizon in raw coordinates and pads the observed
per-coordinate range by 10%.  The constants are frozen so results do not
drift when the pre-run is re-timed or re-ordered.

Non-autonomous fields carry time as a trailing state coordinate with unit
derivative; the Hopf entry below has dimension 3 for that reason (two
oscillator coordinates plus time).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from pintprob import _fields, integrators
from pintprob.core import TimeMesh
from pintprob.integrators import SolverPair

__all__ = [
    "SystemSpec",
    "get_system",
    "available_systems",
    "regenerate_normalization",
]

_NORMALIZATION_FILE = "normalization.json"
# Pad the observed trajectory range so perturbed ensemble states stay
# comfortably inside the normalized box.
_PAD = 1.1
_SCALE_FLOOR = 1e-9


@dataclass(frozen=True)
class SystemSpec:
    """Immutable description of one benchmark problem."""

    system_id: str
    dimension: int
    sys_int: int
    params: np.ndarray
    mesh: TimeMesh
    u0_raw: np.ndarray
    scale: np.ndarray
    offset: np.ndarray
    pair: SolverPair
    K_stop: int
    epsilon_prob: float
    epsilon_det: float
    lyapunov_time: Optional[float] = None

    def __post_init__(self):
        for name in ("params", "u0_raw", "scale", "offset"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.u0_raw.shape != (self.dimension,):
            raise ValueError("u0_raw dimension mismatch")
        if self.scale.shape != (self.dimension,) or self.offset.shape != (
            self.dimension,
        ):
            raise ValueError("normalization constants dimension mismatch")
        if not (self.scale > 0).all():
            raise ValueError("scale entries must be positive")

    def normalize(self, raw):
        """Map raw states (…, d) into normalized coordinates."""
        return (np.asarray(raw, dtype=np.float64) - self.offset) / self.scale

    def denormalize(self, z):
        """Inverse of :meth:`normalize`."""
        return np.asarray(z, dtype=np.float64) * self.scale + self.offset

    def u0(self):
        """Initial state in normalized coordinates."""
        return self.normalize(self.u0_raw)

    def raw_field(self, u):
        """Derivative of a single raw state (d,), for reference integration."""
        U = np.ascontiguousarray(u, dtype=np.float64).reshape(1, -1)
        out = np.empty_like(U)
        _fields.eval_field(self.sys_int, self.params, U, out)
        return out[0]

    def normalized_field(self, z):
        """Derivative in normalized coordinates (chain rule through the
        affine map), for reference integration of normalized states."""
        return self.raw_field(self.denormalize(z)) / self.scale

    def coarse(self, u, interval=None):
        return integrators.coarse_propagate(self.pair, self, u, interval)

    def fine(self, u, interval=None):
        return integrators.fine_propagate(self.pair, self, u, interval)


def _burgers_u0(d):
    # Nodal values on the uniform periodic grid over [-1, 1): x_l = -1 + l dx.
    dx = 2.0 / d
    x = -1.0 + dx * np.arange(d)
    return 0.5 * (np.cos(4.5 * math.pi * x) + 1.0)


@dataclass(frozen=True)
class _Def:
    dimension: int
    sys_int: int
    params: tuple
    mesh: TimeMesh
    u0_raw: np.ndarray
    pair: SolverPair
    K_stop: int
    epsilon_prob: float = 1e-7
    epsilon_det: float = 5e-6
    lyapunov_time: Optional[float] = None


def _defs():
    return {
        "fhn": _Def(
            dimension=2,
            sys_int=_fields.SYS_FHN,
            params=(0.2, 0.2, 3.0),
            mesh=TimeMesh(0.0, 40.0, 40),
            u0_raw=np.array([-1.0, 1.0]),
            pair=SolverPair("rk2", 4, "rk4", 4000),
            K_stop=9,
        ),
        "rossler": _Def(
            dimension=3,
            sys_int=_fields.SYS_ROSSLER,
            params=(0.2, 0.2, 5.7),
            mesh=TimeMesh(0.0, 170.0, 40),
            u0_raw=np.array([0.0, -6.78, 0.02]),
            pair=SolverPair("rk1", 2250, "rk4", 1_125_000),
            K_stop=14,
            lyapunov_time=14.0,
        ),
        "rossler_long": _Def(
            dimension=3,
            sys_int=_fields.SYS_ROSSLER,
            params=(0.2, 0.2, 5.7),
            mesh=TimeMesh(0.0, 340.0, 40),
            u0_raw=np.array([0.0, -6.78, 0.02]),
            pair=SolverPair("rk1", 2250, "rk4", 1_125_000),
            K_stop=14,
            lyapunov_time=14.0,
        ),
        "hopf": _Def(
            dimension=3,
            sys_int=_fields.SYS_HOPF,
            params=(500.0,),
            mesh=TimeMesh(-20.0, 500.0, 32),
            u0_raw=np.array([0.1, 0.1, -20.0]),
            pair=SolverPair("rk1", 64, "rk8", 5313),
            K_stop=12,
        ),
        "dblpend": _Def(
            dimension=4,
            sys_int=_fields.SYS_DBLPEND,
            params=(),
            mesh=TimeMesh(0.0, 80.0, 32),
            u0_raw=np.array([-0.5, 0.0, 0.0, 0.0]),
            pair=SolverPair("rk1", 97, "rk8", 6782),
            K_stop=12,
        ),
        "lorenz": _Def(
            dimension=3,
            sys_int=_fields.SYS_LORENZ,
            params=(10.0, 28.0, 8.0 / 3.0),
            mesh=TimeMesh(0.0, 18.0, 50),
            u0_raw=np.array([-15.0, -15.0, 20.0]),
            pair=SolverPair("rk4", 6, "rk4", 450),
            K_stop=16,
            epsilon_prob=1e-9,
            epsilon_det=5e-9,
            lyapunov_time=1.1,
        ),
        "burgers": _Def(
            dimension=128,
            sys_int=_fields.SYS_BURGERS,
            params=(0.01, 2.0 / 128),
            mesh=TimeMesh(0.0, 5.0, 128),
            u0_raw=_burgers_u0(128),
            pair=SolverPair("rk1", 4, "rk8", 40_000),
            K_stop=12,
        ),
        # Reduced viscous Burgers used by fast tests: 32 grid nodes, 32
        # intervals, fine steps scaled down with the resolution.  The
        # coarse solver keeps 4 Euler steps per interval: explicit Euler
        # needs h below ~dx^2/(2 nu) against the stiffest diffusion mode,
        # and one step per interval (h = 0.156) sits outside that region.
        "burgers32": _Def(
            dimension=32,
            sys_int=_fields.SYS_BURGERS,
            params=(0.01, 2.0 / 32),
            mesh=TimeMesh(0.0, 5.0, 32),
            u0_raw=_burgers_u0(32),
            pair=SolverPair("rk1", 4, "rk8", 10_000),
            K_stop=12,
        ),
    }


def _load_normalization():
    path = resources.files("pintprob").joinpath(_NORMALIZATION_FILE)
    with path.open("r") as fh:
        data = json.load(fh)
    return data["systems"]


_SPEC_CACHE: dict = {}


def available_systems():
    """Sorted tuple of registered system ids."""
    return tuple(sorted(_defs()))


def get_system(system_id: str) -> SystemSpec:
    """Look up a benchmark system by id.

    Raises KeyError with the list of known ids on a miss.
    """
    if system_id in _SPEC_CACHE:
        return _SPEC_CACHE[system_id]
    defs = _defs()
    if system_id not in defs:
        raise KeyError(
            f"unknown system {system_id!r}; known: {', '.join(sorted(defs))}"
        )
    d = defs[system_id]
    norms = _load_normalization()
    if system_id not in norms:
        raise KeyError(
            f"no normalization constants for {system_id!r}; "
            "run regenerate_normalization()"
        )
    entry = norms[system_id]
    spec = SystemSpec(
        system_id=system_id,
        dimension=d.dimension,
        sys_int=d.sys_int,
        params=np.asarray(d.params, dtype=np.float64),
        mesh=d.mesh,
        u0_raw=d.u0_raw,
        scale=np.asarray(entry["scale"], dtype=np.float64),
        offset=np.asarray(entry["offset"], dtype=np.float64),
        pair=d.pair,
        K_stop=d.K_stop,
        epsilon_prob=d.epsilon_prob,
        epsilon_det=d.epsilon_det,
        lyapunov_time=d.lyapunov_time,
    )
    _SPEC_CACHE[system_id] = spec
    return spec


def _raw_range(d: _Def, chunks_per_interval=64):
    """Min/max of each coordinate along the fine trajectory, sampled at
    `chunks_per_interval` points per mesh interval (plus the endpoints)."""
    mesh = d.mesh
    scheme, steps = d.pair.fine_scheme, d.pair.fine_steps
    params = np.asarray(d.params, dtype=np.float64)
    ident = np.ones(d.dimension)
    zero = np.zeros(d.dimension)
    u = d.u0_raw.astype(np.float64).copy()
    lo = u.copy()
    hi = u.copy()
    chunks = min(steps, chunks_per_interval)
    # Split each interval's steps into near-equal chunks; record chunk ends.
    bounds = [round(steps * c / chunks) for c in range(chunks + 1)]
    h = mesh.dt / steps
    for _ in range(mesh.N):
        for c in range(chunks):
            sub = bounds[c + 1] - bounds[c]
            if sub == 0:
                continue
            u = integrators.propagate_normalized(
                scheme, sub, d.sys_int, params, ident, zero, u, h * sub
            )
            np.minimum(lo, u, out=lo)
            np.maximum(hi, u, out=hi)
    return lo, hi


def regenerate_normalization(out_path=None, system_ids=None):
    """Recompute normalization constants and write them as JSON.

    For each system the fine solver is run once over the whole horizon in
    raw coordinates.  scale = 1.1 * half-range (floored at 1e-9), offset =
    range midpoint, per coordinate.  Returns the path written.
    """
    if out_path is None:
        out_path = resources.files("pintprob").joinpath(_NORMALIZATION_FILE)
    defs = _defs()
    ids = sorted(defs) if system_ids is None else list(system_ids)
    systems = {}
    for sid in ids:
        lo, hi = _raw_range(defs[sid])
        half = 0.5 * (hi - lo)
        scale = np.maximum(_PAD * half, _SCALE_FLOOR)
        offset = 0.5 * (hi + lo)
        systems[sid] = {
            "scale": [float(v) for v in scale],
            "offset": [float(v) for v in offset],
        }
    payload = {"version": 1, "systems": systems}
    with open(str(out_path), "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")
    _SPEC_CACHE.clear()
    return str(out_path)
