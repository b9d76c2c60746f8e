"""Data of the reaction-diffusion inclusion on ``(0, pi)``.

``u_t - u_xx + d j(x, t, u) \\ni f(x, t)`` with Dirichlet boundary values.
The subgradient is described by a scalar function ``h = j'`` that is smooth
apart from finitely many jumps; at a jump ``s_j`` the subgradient is the
interval between the one-sided limits. Mollifying ``h`` with a bump kernel of
width ``1/n`` gives a smooth single-valued selection; shifting the kernel by
a parameter ``theta`` in ``[0, 1]`` moves the value at the jump through the
whole interval, which is how distinct solutions are sampled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.integrate import cumulative_simpson

LAMBDA_1 = 1.0
DOMAIN_MEASURE = math.pi

# ---------------------------------------------------------------- mollifier


def _bump(y: np.ndarray) -> np.ndarray:
    """Unnormalized bump on ``(-1/2, 1/2)``."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inside = np.abs(y) < 0.5
    out[inside] = np.exp(-1.0 / (1.0 - 4.0 * y[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def _bump_cdf_table(n: int = 8193):
    y = np.linspace(-0.5, 0.5, n)
    cdf = cumulative_simpson(_bump(y), x=y, initial=0.0)
    cdf /= cdf[-1]
    return y, cdf


def bump_cdf(y) -> np.ndarray:
    """Distribution function of the normalized bump, ``0`` below ``-1/2`` and ``1`` above ``1/2``."""
    grid, cdf = _bump_cdf_table()
    return np.interp(y, grid, cdf, left=0.0, right=1.0)


@lru_cache(maxsize=8)
def bump_nodes(order: int = 16):
    """Gauss-Legendre nodes on ``(-1/2, 1/2)`` with weights ``w_i rho(y_i)`` summing to 1."""
    x, w = np.polynomial.legendre.leggauss(order)
    y = 0.5 * x
    wr = 0.5 * w * _bump(y)
    return y, wr / wr.sum()


def kernel_offset(theta) -> np.ndarray:
    """Centre of the shifted kernel in units of its width; ``theta = 1/2`` is symmetric."""
    return 0.5 - np.asarray(theta, dtype=float)


# ---------------------------------------------------------------- nonlinearity


@dataclass(frozen=True)
class ValidationReport:
    j2_violations: int
    j3_violations: int
    max_j2_excess: float
    max_j3_excess: float
    grid_size: int

    @property
    def ok(self) -> bool:
        return self.j2_violations == 0 and self.j3_violations == 0


@dataclass(frozen=True)
class Nonlinearity:
    """``h(x, t, s) = smooth(x, t, s) + sum_j size_j * H(s - loc_j)``.

    ``jumps`` lists ``(loc_j, size_j)``. Growth ``|xi| <= c1 + c2 |s|`` and
    sign condition ``xi s >= d1 - d2 s^2`` are claimed for every ``xi`` in
    the subgradient and checked by :meth:`validate`.
    """

    name: str
    smooth: Callable | None
    jumps: tuple
    c1: float
    c2: float
    d1: float
    d2: float
    params: dict = field(default_factory=dict)

    def jump_points(self, x=None, t=None) -> list[float]:
        return [loc for loc, _ in self.jumps]

    def h(self, x, t, s, theta: float = 0.5) -> np.ndarray:
        """Pointwise selection; at a jump the value sits ``theta`` of the way up."""
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        if self.smooth is not None:
            out = out + self.smooth(x, t, s)
        for loc, size in self.jumps:
            out = out + size * np.where(s > loc, 1.0, np.where(s < loc, 0.0, theta))
        return out

    def hull(self, x, t, s) -> tuple[np.ndarray, np.ndarray]:
        """Endpoints of the subgradient interval at ``s``."""
        lo = self.h(x, t, s, 0.0)
        hi = self.h(x, t, s, 1.0)
        return np.minimum(lo, hi), np.maximum(lo, hi)

    def validate(self, s_grid=None, x_grid=None, t_grid=None, lam1: float = LAMBDA_1) -> ValidationReport:
        """Check the growth and sign conditions on a grid, including every jump point."""
        if self.d2 >= lam1 or self.d2 < 0:
            raise ValueError(f"d2 must lie in [0, {lam1}), got {self.d2}")
        s = np.linspace(-50.0, 50.0, 20001) if s_grid is None else np.asarray(s_grid, dtype=float)
        s = np.unique(np.concatenate([s, self.jump_points()]))
        xs = np.linspace(0.0, math.pi, 7) if x_grid is None else np.asarray(x_grid, dtype=float)
        ts = np.array([0.0]) if t_grid is None else np.asarray(t_grid, dtype=float)
        j2 = j3 = 0
        e2 = e3 = -math.inf
        for x in xs:
            for t in ts:
                lo, hi = self.hull(x, t, s)
                for xi in (lo, hi):
                    g = np.abs(xi) - (self.c1 + self.c2 * np.abs(s))
                    d = (self.d1 - self.d2 * s**2) - xi * s
                    j2 += int(np.sum(g > 1e-12))
                    j3 += int(np.sum(d > 1e-12))
                    e2 = max(e2, float(g.max()))
                    e3 = max(e3, float(d.max()))
        return ValidationReport(j2, j3, e2, e3, len(s) * len(xs) * len(ts))

    def mollified_constants(self, n_moll: int, lam1: float = LAMBDA_1) -> tuple[float, float, float, float]:
        """Constants ``(c1, c2, d1, d2)`` valid for the width-``1/n`` mollification.

        With ``|eta| <= 1/n``: ``|h(s - eta)| <= c1 + c2/n + c2|s|`` and
        ``h(s - eta) s >= d1 - d2 s^2 - a|s| - d2/n^2 - c1/n - c2/n^2`` with
        ``a = (2 d2 + c2)/n``; the linear term is absorbed by Young's
        inequality with ``delta = (lam1 - d2)/4``, keeping ``d2 < lam1``.
        """
        if n_moll < 1:
            raise ValueError("mollifier index must be >= 1")
        n = float(n_moll)
        c1 = self.c1 + self.c2 / n
        a = (2 * self.d2 + self.c2) / n
        delta = (lam1 - self.d2) / 4.0 if a > 0 else 0.0
        d1 = self.d1 - self.d2 / n**2 - self.c1 / n - self.c2 / n**2 - (a**2 / (4 * delta) if a > 0 else 0.0)
        return c1, self.c2, d1, self.d2 + delta


def mollified_h(nl: Nonlinearity, n_moll, x, t, s, theta=0.5, order: int = 16) -> np.ndarray:
    """``(rho_n * h)(s)`` for the kernel of width ``1/n_moll`` shifted by ``theta``.

    Jumps are convolved exactly through the kernel's distribution function;
    the smooth part uses Gauss-Legendre quadrature against the kernel.
    ``n_moll`` and ``theta`` broadcast against ``s``.
    """
    n = np.asarray(n_moll, dtype=float)
    if np.any(n < 1):
        raise ValueError("mollifier index must be >= 1")
    s = np.asarray(s, dtype=float)
    c = kernel_offset(theta)
    out = np.zeros(np.broadcast(s, n, c).shape)
    if nl.smooth is not None:
        y, w = bump_nodes(order)
        eta = (y + c[..., None]) / n[..., None]
        out = out + np.sum(w * nl.smooth(x, t, s[..., None] - eta), axis=-1)
    for loc, size in nl.jumps:
        out = out + size * bump_cdf(n * (s - loc) - c)
    return out


def make_nonlinearity(name: str, **params) -> Nonlinearity:
    """Shipped nonlinearities: ``heaviside``, ``sine-heaviside``, ``smooth-sine``, ``zero``."""
    if name == "heaviside":
        return Nonlinearity(name, None, ((0.0, 1.0),), 1.0, 0.0, 0.0, 0.0)
    if name == "sine-heaviside":
        amp = float(params.get("amp", 0.5))
        if not 0 <= amp < LAMBDA_1:
            raise ValueError("sine-heaviside needs 0 <= amp < 1")
        return Nonlinearity(
            name, lambda x, t, s: amp * np.sin(s), ((1.0, 1.0),), 1.0, amp, 0.0, amp, {"amp": amp}
        )
    if name == "smooth-sine":
        amp = float(params.get("amp", 0.5))
        if not 0 <= amp < LAMBDA_1:
            raise ValueError("smooth-sine needs 0 <= amp < 1")
        return Nonlinearity(name, lambda x, t, s: amp * np.sin(s), (), 0.0, amp, 0.0, amp, {"amp": amp})
    if name == "zero":
        return Nonlinearity(name, None, (), 0.0, 0.0, 0.0, 0.0)
    raise KeyError(f"unknown nonlinearity {name!r}")


NONLINEARITIES = ("heaviside", "sine-heaviside", "smooth-sine", "zero")

# ---------------------------------------------------------------- forcing


@lru_cache(maxsize=8)
def _sine_projection(n_modes: int, n_nodes: int):
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    x = 0.5 * math.pi * (x + 1.0)
    w = 0.5 * math.pi * w
    k = np.arange(1, n_modes + 1)
    return x, w, np.sin(np.outer(k, x)), k.astype(float)


@dataclass(frozen=True)
class Forcing:
    """Source term ``f0(x, t)``; ``sup_past`` bounds ``||f(t)||_{V*}`` for ``t <= t_bar``."""

    name: str
    f0: Callable
    t_bar: float
    sup_past: float
    params: dict = field(default_factory=dict)

    def sine_coefficients(self, t: float, n_modes: int = 64) -> np.ndarray:
        x, w, S, _ = _sine_projection(n_modes, max(256, 4 * n_modes))
        return (2.0 / math.pi) * S @ (w * self.f0(x, t))

    def dual_norm(self, t: float, n_modes: int = 64) -> float:
        """``||f(t)||_{V*}`` from sine coefficients: ``sqrt((pi/2) sum fhat_k^2 / k^2)``."""
        fh = self.sine_coefficients(t, n_modes)
        k = np.arange(1, n_modes + 1)
        return math.sqrt(0.5 * math.pi * float(np.sum(fh**2 / k**2)))

    def dual_norm_sq_integral(self, a: float, b: float, weight_rate: float = 0.0, shift: float = 0.0) -> float:
        """``int_a^b e^{rate (s - shift)} ||f(s)||^2_{V*} ds`` by composite Gauss-Legendre."""
        if b <= a:
            return 0.0
        panels = max(1, int(math.ceil(b - a)) * 4)
        x, w = np.polynomial.legendre.leggauss(8)
        edges = np.linspace(a, b, panels + 1)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            s = 0.5 * (hi - lo) * (x + 1.0) + lo
            vals = np.array([self.dual_norm(si) ** 2 for si in s])
            total += 0.5 * (hi - lo) * float(np.sum(w * np.exp(weight_rate * (s - shift)) * vals))
        return total

    def check_square_integrable(self, a: float, b: float) -> bool:
        v = self.dual_norm_sq_integral(a, b)
        return math.isfinite(v)


def make_forcing(name: str, **params) -> Forcing:
    """Shipped forcings: ``zero``, ``sine-steady`` (``A sin x``), ``sine-periodic`` (``A sin x (1 + sin t)``)."""
    amp = float(params.get("amp", 1.0))
    t_bar = float(params.get("t_bar", 0.0))
    root = math.sqrt(0.5 * math.pi)
    if name == "zero":
        return Forcing(name, lambda x, t: np.zeros_like(np.asarray(x, dtype=float)), t_bar, 0.0, {"t_bar": t_bar})
    if name == "sine-steady":
        return Forcing(
            name, lambda x, t: amp * np.sin(x), t_bar, root * abs(amp), {"amp": amp, "t_bar": t_bar}
        )
    if name == "sine-periodic":
        return Forcing(
            name,
            lambda x, t: amp * np.sin(x) * (1.0 + math.sin(t)),
            t_bar,
            2.0 * root * abs(amp),
            {"amp": amp, "t_bar": t_bar},
        )
    raise KeyError(f"unknown forcing {name!r}")


FORCINGS = ("zero", "sine-steady", "sine-periodic")
