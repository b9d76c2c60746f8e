"""Spectral Galerkin integration of the mollified inclusion.

The state is the coefficient vector ``a`` of ``u = sum_k a_k sin(kx)``. The
Galerkin system reads

    a_k' = -k^2 a_k + g_k(a, t),
    g_k = (2/pi) int_0^pi (f0(x, t) - j_n'(u(x))) sin(kx) dx,

and is advanced by exponential Euler: the linear part exactly, ``g`` frozen
over the step. The step therefore reproduces constant-forcing steady states
exactly. Time nodes are the multiples of ``dt`` between the start and end
times, plus the two end points, so that trajectories glued at a grid time
coincide with a single run through it.

Ensembles are integrated together as an ``(M, n)`` array; each member carries
its own mollifier index and kernel shift.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from ..metric import SINE_MODE_WEIGHT
from .problem import Forcing, Nonlinearity, mollified_h


class SolverBlowUp(RuntimeError):
    pass


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    modes: int = 8
    dt: float = 1e-3
    mollifier_index: int = 8
    selection_theta: float = 0.5
    quad_points: int | None = None
    norm_cap: float = 1e6

    def __post_init__(self):
        if self.modes < 1:
            raise ValueError("modes must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.mollifier_index < 1:
            raise ValueError("mollifier_index must be >= 1")
        if not 0.0 <= self.selection_theta <= 1.0:
            raise ValueError("selection_theta must lie in [0, 1]")
        if self.quad_points is None:
            object.__setattr__(self, "quad_points", 8 * self.modes)
        if self.quad_points < 4 * self.modes:
            raise ValueError("quad_points must be >= 4 * modes")


@dataclass(frozen=True, eq=False)
class Discretization:
    x: np.ndarray  # quadrature nodes on (0, pi)
    w: np.ndarray  # quadrature weights
    S: np.ndarray  # (modes, Q) values sin(k x_q)
    lam: np.ndarray  # eigenvalues k^2


@lru_cache(maxsize=16)
def discretization(modes: int, quad_points: int) -> Discretization:
    """Composite Gauss-Legendre on ``(0, pi)``, 8-node panels."""
    panels = max(1, math.ceil(quad_points / 8))
    gx, gw = np.polynomial.legendre.leggauss(8)
    edges = np.linspace(0.0, math.pi, panels + 1)
    h = np.diff(edges)
    x = (edges[:-1, None] + 0.5 * h[:, None] * (gx[None, :] + 1.0)).ravel()
    w = (0.5 * h[:, None] * gw[None, :]).ravel()
    k = np.arange(1, modes + 1, dtype=float)
    S = np.sin(np.outer(k, x))
    for arr in (x, w, S, k):
        arr.setflags(write=False)
    return Discretization(x, w, S, k**2)


def h_norm(a) -> np.ndarray:
    """``||u||_H`` for coefficient rows ``a``."""
    return np.sqrt(SINE_MODE_WEIGHT * np.sum(np.atleast_2d(a) ** 2, axis=-1))


def galerkin_rhs(A, t: float, disc: Discretization, nl: Nonlinearity, forcing: Forcing, n_moll, theta) -> np.ndarray:
    """Projected source ``g`` for each row of ``A`` (shape ``(M, n)``)."""
    A = np.atleast_2d(A)
    u = A @ disc.S  # (M, Q)
    n = np.asarray(n_moll, dtype=float).reshape(-1, 1)
    th = np.asarray(theta, dtype=float).reshape(-1, 1)
    integrand = forcing.f0(disc.x, t)[None, :] - mollified_h(nl, n, disc.x, t, u, th)
    if not np.all(np.isfinite(integrand)):
        raise QuadratureError(f"non-finite integrand at t={t}")
    return (2.0 / math.pi) * (integrand * disc.w) @ disc.S.T


def _phi(lam: np.ndarray, dt: float) -> np.ndarray:
    """``(1 - e^{-lam dt}) / lam``."""
    return -np.expm1(-lam * dt) / lam


def time_nodes(t0: float, T: float, dt: float) -> np.ndarray:
    """``t0``, the multiples of ``dt`` strictly inside ``(t0, T)``, then ``T``."""
    if not T > t0:
        raise ValueError("need T > t0")
    tol = 1e-9 * dt
    k0 = math.floor((t0 + tol) / dt) + 1
    k1 = math.ceil((T - tol) / dt) - 1
    inner = np.arange(k0, k1 + 1, dtype=float) * dt if k1 >= k0 else np.empty(0)
    inner = inner[(inner > t0 + tol) & (inner < T - tol)]
    return np.concatenate([[t0], inner, [T]])


def _advance(A, nodes, disc, nl, forcing, n_moll, theta, norm_cap, record: bool):
    A = np.array(A, dtype=float)
    hist = [A.copy()] if record else None
    for t, t_next in zip(nodes[:-1], nodes[1:]):
        h = t_next - t
        g = galerkin_rhs(A, t, disc, nl, forcing, n_moll, theta)
        A = np.exp(-disc.lam * h) * A + _phi(disc.lam, h) * g
        if not np.all(np.isfinite(A)) or np.any(h_norm(A) > norm_cap):
            raise SolverBlowUp(f"state norm exceeded {norm_cap} at t={t_next}")
        if record:
            hist.append(A.copy())
    return A, (np.stack(hist) if record else None)


def galerkin_step(a, t: float, cfg: SolverConfig, nl: Nonlinearity, forcing: Forcing, dt: float | None = None):
    """One exponential-Euler step of length ``dt`` (default ``cfg.dt``)."""
    dt = cfg.dt if dt is None else dt
    disc = discretization(cfg.modes, cfg.quad_points)
    A = np.atleast_2d(np.asarray(a, dtype=float))
    g = galerkin_rhs(A, t, disc, nl, forcing, cfg.mollifier_index, cfg.selection_theta)
    out = np.exp(-disc.lam * dt) * A + _phi(disc.lam, dt) * g
    return out[0] if np.ndim(a) == 1 else out


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    coeffs: np.ndarray  # (steps + 1, n) or (steps + 1, M, n)
    norms: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.coeffs[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        n = self.coeffs.shape[-1]
        wr.writerow(["t"] + [f"a{k}" for k in range(1, n + 1)])
        for t, row in zip(self.times, self.coeffs):
            wr.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Trajectory":
        rows = list(csv.reader(io.StringIO(text)))[1:]
        data = np.array([[float(v) for v in r] for r in rows])
        return cls(data[:, 0], data[:, 1:], h_norm(data[:, 1:]))


def _cache_key(u0, t0, T, cfg, nl, forcing) -> str:
    payload = {
        "u0": [repr(float(v)) for v in np.asarray(u0).ravel()],
        "t0": repr(float(t0)),
        "T": repr(float(T)),
        "cfg": asdict(cfg),
        "nl": [nl.name, sorted(nl.params.items())],
        "forcing": [forcing.name, sorted(forcing.params.items())],
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def solve_trajectory(
    u0,
    t0: float,
    T: float,
    cfg: SolverConfig,
    nl: Nonlinearity,
    forcing: Forcing,
    cache_dir: str | None = None,
) -> Trajectory:
    """Integrate from ``t0`` to ``T``, restarting at every unit interval.

    Returns the coefficients on every time node and the ``H``-norm trace.
    With ``cache_dir`` the trajectory is stored as CSV under its config hash
    and reused on later calls.
    """
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (cfg.modes,):
        raise ValueError(f"u0 must have {cfg.modes} coefficients")
    path = None
    if cache_dir is not None:
        path = os.path.join(cache_dir, _cache_key(u0, t0, T, cfg, nl, forcing) + ".csv")
        if os.path.exists(path):
            with open(path) as fh:
                return Trajectory.from_csv(fh.read())
    disc = discretization(cfg.modes, cfg.quad_points)
    times, blocks = [np.array([t0])], [u0[None, :]]
    A = u0[None, :]
    start = t0
    while start < T:
        stop = min(start + 1.0, T)
        nodes = time_nodes(start, stop, cfg.dt)
        A, hist = _advance(A, nodes, disc, nl, forcing, cfg.mollifier_index, cfg.selection_theta, cfg.norm_cap, True)
        times.append(nodes[1:])
        blocks.append(hist[1:, 0, :])
        start = stop
    traj = Trajectory(np.concatenate(times), np.vstack(blocks), None)
    traj = Trajectory(traj.times, traj.coeffs, h_norm(traj.coeffs))
    if path is not None:
        os.makedirs(cache_dir, exist_ok=True)
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            fh.write(traj.to_csv())
        os.replace(tmp, path)
    return traj


def solve_ensemble(
    U0,
    t0: float,
    T: float,
    cfg: SolverConfig,
    nl: Nonlinearity,
    forcing: Forcing,
    n_moll=None,
    theta=None,
    record: bool = False,
):
    """Integrate every row of ``U0`` with its own ``(n_moll, theta)``.

    Returns the final coefficients ``(M, n)``, and with ``record`` also the
    time nodes and the full history ``(steps + 1, M, n)``.
    """
    U0 = np.atleast_2d(np.asarray(U0, dtype=float))
    M = U0.shape[0]
    n_moll = np.full(M, cfg.mollifier_index) if n_moll is None else np.asarray(n_moll)
    theta = np.full(M, cfg.selection_theta) if theta is None else np.asarray(theta)
    disc = discretization(cfg.modes, cfg.quad_points)
    if T == t0:
        return (U0, np.array([t0]), U0[None]) if record else U0
    A = U0
    times, hists = [np.array([t0])], [U0[None]]
    start = t0
    while start < T:
        stop = min(start + 1.0, T)
        nodes = time_nodes(start, stop, cfg.dt)
        A, hist = _advance(A, nodes, disc, nl, forcing, n_moll, theta, cfg.norm_cap, record)
        if record:
            times.append(nodes[1:])
            hists.append(hist[1:])
        start = stop
    if record:
        return A, np.concatenate(times), np.concatenate(hists)
    return A


def weak_form_residual(times, coeffs, cfg: SolverConfig, nl: Nonlinearity, forcing: Forcing, n_moll=None, theta=None):
    """Per-step, per-mode residual ``(a^{j+1} - a^j)/h + k^2 a^j - g(a^j, t_j)``.

    ``coeffs`` is ``(steps + 1, n)`` or ``(steps + 1, M, n)``.
    """
    disc = discretization(cfg.modes, cfg.quad_points)
    n_moll = cfg.mollifier_index if n_moll is None else n_moll
    theta = cfg.selection_theta if theta is None else theta
    C = coeffs if coeffs.ndim == 3 else coeffs[:, None, :]
    out = np.empty((len(times) - 1,) + C.shape[1:])
    for j in range(len(times) - 1):
        h = times[j + 1] - times[j]
        g = galerkin_rhs(C[j], times[j], disc, nl, forcing, n_moll, theta)
        out[j] = (C[j + 1] - C[j]) / h + disc.lam * C[j] - g
    return out if coeffs.ndim == 3 else out[:, 0, :]
