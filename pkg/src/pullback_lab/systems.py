"""Closed-form example systems and the name registry used by scenarios.

Every system is exposed as a :class:`~pullback_lab.process.Process`:

* ``drift``: ``U(t, tau; x) = {t - tau}`` for ``tau < t``, a process with no
  bounded attracting set.
* ``shift``: left shift on ``R^N`` (a truncation of ``l^2``), discrete time.
* ``planar-ode``: ``x' = 0``, ``y' = -x`` (``-1`` on ``x = 0``) on
  ``[0, 1] x [0, inf)``, stopped at ``y = 0``.
* ``heat-switch``: the heat semigroup on sine modes, switched on the sign of
  the first coefficient.
* ``heat-plus``: the unswitched heat semigroup.
* ``finite-random``: set iteration of a random multivalued map on a finite
  state space.
* ``inclusion``: the Galerkin ensemble for the reaction-diffusion inclusion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .metric import SINE_MODE_WEIGHT, SampledSet, as_point
from .process import Process

# ---------------------------------------------------------------- drift


def drift_evolve(t: float, tau: float, x) -> SampledSet:
    if tau > t:
        raise ValueError("need tau <= t")
    if t == tau:
        return SampledSet(as_point(x, 1)[None, :])
    return SampledSet(np.array([[t - tau]]))


def drift_process() -> Process:
    def evolve(t, tau, seeds, budget, rng_seed):
        return SampledSet(np.array([[t - tau]]), label=seeds.label)

    return Process(evolve, kind="general", dimension=1, name="drift")


# ---------------------------------------------------------------- shift


def shift_evolve(n: int, x) -> np.ndarray:
    """Shift ``x`` left ``n`` times, padding with zeros."""
    if int(n) != n or n < 0:
        raise ValueError(f"shift count must be a non-negative integer, got {n}")
    n = int(n)
    arr = np.asarray(x, dtype=float)
    x = np.atleast_2d(arr)
    out = np.zeros_like(x)
    if n < x.shape[1]:
        out[:, : x.shape[1] - n] = x[:, n:]
    return out[0] if arr.ndim == 1 else out


def shift_process(N: int = 64) -> Process:
    if N < 2:
        raise ValueError("shift truncation needs N >= 2")

    def evolve(t, tau, seeds, budget, rng_seed):
        pts = np.atleast_2d(shift_evolve(int(round(t - tau)), seeds.points))
        return SampledSet(pts, label=seeds.label)

    return Process(evolve, kind="semiflow", dimension=N, name="shift", discrete=True, strict=True)


# ---------------------------------------------------------------- planar ODE


def _check_planar(z: np.ndarray) -> None:
    if np.any(z[:, 0] < 0) or np.any(z[:, 0] > 1) or np.any(z[:, 1] < 0):
        raise ValueError("planar states must lie in [0, 1] x [0, inf)")


def planar_evolve(t: float, z0) -> np.ndarray:
    """Exact flow: ``y`` falls at rate ``x`` (rate ``1`` when ``x = 0``) and stops at ``0``."""
    if t < 0:
        raise ValueError("t must be >= 0")
    z = np.atleast_2d(np.asarray(z0, dtype=float))
    _check_planar(z)
    x, y = z[:, 0], z[:, 1]
    rate = np.where(x == 0.0, 1.0, x)
    out = np.column_stack([x, np.maximum(y - rate * t, 0.0)])
    return out[0] if np.ndim(z0) == 1 else out


def planar_hitting_time(z0) -> float:
    x, y = as_point(z0, 2)
    return float(y if x == 0.0 else y / x)


def planar_process() -> Process:
    def evolve(t, tau, seeds, budget, rng_seed):
        return SampledSet(np.atleast_2d(planar_evolve(t - tau, seeds.points)), label=seeds.label)

    return Process(evolve, kind="semiflow", dimension=2, name="planar-ode", strict=True)


# ---------------------------------------------------------------- heat switch


def alpha_of(u) -> float:
    """Coefficient of ``sin(x)``, i.e. ``(2/pi)(u, sin)`` in ``L^2(0, pi)``."""
    return float(np.asarray(u, dtype=float).reshape(-1)[0])


def _decay(n_modes: int, t: float) -> np.ndarray:
    k = np.arange(1, n_modes + 1, dtype=float)
    return np.exp(-(k**2) * t)


def heat_plus_evolve(t: float, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return u * _decay(u.shape[-1], t)


def heat_switch_evolve(t: float, u) -> np.ndarray:
    """Closed form of the switched heat flow.

    With ``a_1 > 0`` every mode decays as ``e^{-k^2 t}``. Otherwise the first
    mode relaxes to ``-1`` as ``(a_1 + 1) e^{-t} - 1`` and the rest decay as
    before. Both regions are forward invariant, so the regime is fixed by
    the initial sign.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    u = np.asarray(u, dtype=float)
    out = heat_plus_evolve(t, u)
    minus = u[..., 0] <= 0
    e = np.exp(-t)
    out[..., 0] = np.where(minus, (u[..., 0] + 1.0) * e - 1.0, out[..., 0])
    return out


def v1(n_modes: int) -> np.ndarray:
    e = np.zeros(n_modes)
    e[0] = 1.0
    return e


def heat_switch_process(modes: int = 16) -> Process:
    if modes < 2:
        raise ValueError("heat-switch needs at least 2 modes")

    def evolve(t, tau, seeds, budget, rng_seed):
        return SampledSet(heat_switch_evolve(t - tau, seeds.points), label=seeds.label, metric_weight=SINE_MODE_WEIGHT)

    return Process(
        evolve, kind="semiflow", dimension=modes, name="heat-switch", metric_weight=SINE_MODE_WEIGHT, strict=True
    )


def heat_plus_process(modes: int = 16) -> Process:
    if modes < 1:
        raise ValueError("need at least one mode")

    def evolve(t, tau, seeds, budget, rng_seed):
        return SampledSet(heat_plus_evolve(t - tau, seeds.points), label=seeds.label, metric_weight=SINE_MODE_WEIGHT)

    return Process(
        evolve, kind="semiflow", dimension=modes, name="heat-plus", metric_weight=SINE_MODE_WEIGHT, strict=True
    )


# ---------------------------------------------------------------- finite random map


def random_transitions(n_states: int, seed: int, max_out: int = 2) -> np.ndarray:
    """Boolean ``(n, n)`` matrix; row ``i`` marks the 1 to ``max_out`` successors of ``i``."""
    rng = np.random.default_rng(seed)
    T = np.zeros((n_states, n_states), dtype=bool)
    for i in range(n_states):
        k = int(rng.integers(1, max_out + 1))
        T[i, rng.choice(n_states, size=k, replace=False)] = True
    return T


def finite_image(T: np.ndarray, states: np.ndarray, steps: int) -> np.ndarray:
    """Indicator of ``F^steps(states)``."""
    cur = np.zeros(T.shape[0], dtype=bool)
    cur[np.asarray(states, dtype=int)] = True
    for _ in range(steps):
        cur = T[cur].any(axis=0)
    return cur


def finite_process(n_states: int = 64, seed: int = 0, max_out: int = 2) -> Process:
    """States are embedded as the integers ``0..n-1`` on the real line.

    Images are computed exactly, so ``branch_budget`` has no effect.
    """
    T = random_transitions(n_states, seed, max_out)

    def evolve(t, tau, seeds, budget, rng_seed):
        idx = np.rint(seeds.points[:, 0]).astype(int)
        if np.any(idx < 0) or np.any(idx >= n_states) or not np.allclose(idx, seeds.points[:, 0]):
            raise ValueError("seeds must be integer states")
        img = np.flatnonzero(finite_image(T, idx, int(round(t - tau))))
        return SampledSet(img.astype(float)[:, None], label=seeds.label)

    return Process(evolve, kind="semiflow", dimension=1, name="finite-random", discrete=True, strict=True)


# ---------------------------------------------------------------- registry


@dataclass(frozen=True)
class SystemEntry:
    name: str
    factory: Callable[..., Process]
    params: dict  # JSON schema "properties" for the parameter record
    summary: str


def _inclusion_factory(**params) -> Process:
    from .inclusion import inclusion_process

    return inclusion_process(**params)


_INT = {"type": "integer"}
_NUM = {"type": "number"}

REGISTRY: dict[str, SystemEntry] = {
    e.name: e
    for e in [
        SystemEntry("drift", lambda: drift_process(), {}, "U(t,tau;x) = {t - tau}; escapes every bounded set"),
        SystemEntry(
            "shift", lambda N=64: shift_process(N), {"N": {**_INT, "minimum": 2}}, "left shift on R^N, discrete time"
        ),
        SystemEntry("planar-ode", lambda: planar_process(), {}, "x' = 0, y' = -x (-1 at x = 0), stopped at y = 0"),
        SystemEntry(
            "heat-switch",
            lambda modes=16: heat_switch_process(modes),
            {"modes": {**_INT, "minimum": 2}},
            "sine-mode heat flow switched on the sign of the first mode",
        ),
        SystemEntry(
            "inclusion",
            _inclusion_factory,
            {
                "modes": {**_INT, "minimum": 1},
                "dt": {**_NUM, "exclusiveMinimum": 0},
                "quad_points": _INT,
                "nonlinearity": {"type": "string"},
                "nonlinearity_params": {"type": "object"},
                "forcing": {"type": "string"},
                "forcing_params": {"type": "object"},
                "mollifier_indices": {"type": "array", "items": _INT},
                "thetas": {"type": "array", "items": _NUM},
            },
            "spectral Galerkin ensemble for the reaction-diffusion inclusion on (0, pi)",
        ),
        SystemEntry(
            "heat-plus",
            lambda modes=16: heat_plus_process(modes),
            {"modes": {**_INT, "minimum": 1}},
            "unswitched sine-mode heat flow",
        ),
        SystemEntry(
            "finite-random",
            lambda n_states=64, seed=0, max_out=2: finite_process(n_states, seed, max_out),
            {"n_states": {**_INT, "minimum": 1}, "seed": _INT, "max_out": {**_INT, "minimum": 1}},
            "set iteration of a random multivalued map on integer states",
        ),
    ]
}


def system_names() -> list[str]:
    return list(REGISTRY)


def make_system(name: str, params: dict | None = None) -> Process:
    if name not in REGISTRY:
        raise KeyError(f"unknown system {name!r}; known: {', '.join(REGISTRY)}")
    return REGISTRY[name].factory(**(params or {}))
