"""Analytic energy and tail bounds for the inclusion, and their measured counterparts.

With ``eps = 1/2 - d2/(2 lam1)`` the energy inequality becomes

    d/dt ||u||^2 + C1 ||u||^2 <= C2 ||f||^2_{V*} + C3,
    C1 = lam1 - d2,  C2 = lam1 / (lam1 - d2),  C3 = -2 d1 m(Omega),

which integrates to ``||u(t)||^2 <= e^{-C1 (t - t0)} ||u0||^2 + C3/C1 + C2 F(t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .problem import DOMAIN_MEASURE, LAMBDA_1, Forcing, Nonlinearity


class NotAbsorbedError(ValueError):
    pass


@dataclass(frozen=True)
class EnergyCertificate:
    C1: float
    C2: float
    C3: float
    eps: float
    lam1: float
    constants: tuple  # (c1, c2, d1, d2) actually used
    forcing: Forcing

    @property
    def t_bar(self) -> float:
        return self.forcing.t_bar

    def F(self, t: float) -> float:
        """Nondecreasing forcing envelope, split at ``t_bar``."""
        base = self.forcing.sup_past**2 / self.C1
        if t < self.t_bar:
            return base
        tail = self.forcing.dual_norm_sq_integral(self.t_bar, t, weight_rate=self.C1, shift=self.t_bar)
        return base + tail

    def R(self, t: float) -> float:
        return math.sqrt(self.C3 / self.C1 + self.C2 * self.F(t)) + 1.0

    def tau_bar(self, t: float, E_norm: float) -> float:
        """Latest start time after which sets of norm ``E_norm`` are inside ``B(0, R(t))``."""
        log_term = -math.inf if E_norm <= 0 else (2.0 / self.C1) * math.log(E_norm)
        return min(t - 1.0, t - log_term, self.t_bar)

    def decay_bound(self, t: float, t0: float, u0_norm_sq: float) -> float:
        """Right side of the integrated energy inequality for ``||u(t)||^2``."""
        return math.exp(-self.C1 * (t - t0)) * u0_norm_sq + self.C3 / self.C1 + self.C2 * self.F(t)


def energy_certificate(
    nl: Nonlinearity, forcing: Forcing, n_moll: int | None = None, lam1: float = LAMBDA_1
) -> EnergyCertificate:
    """Constants of the dissipative estimate.

    With ``n_moll`` the constants of the mollified nonlinearity are used,
    which is what the solver actually integrates.
    """
    c1, c2, d1, d2 = (nl.c1, nl.c2, nl.d1, nl.d2) if n_moll is None else nl.mollified_constants(n_moll, lam1)
    if d2 >= lam1:
        raise ValueError(f"need d2 < lambda_1, got d2={d2}")
    eps = 0.5 - d2 / (2.0 * lam1)
    C1 = 2.0 * eps * lam1
    C2 = 1.0 / (2.0 * eps)
    C3 = max(-2.0 * d1 * DOMAIN_MEASURE, 0.0)
    return EnergyCertificate(C1, C2, C3, eps, lam1, (c1, c2, d1, d2), forcing)


def galerkin_energy_bound(
    u0_norm_sq: float, t0: float, t: float, c1: float, c2: float, forcing: Forcing
) -> float:
    """Gronwall bound for ``||u_n(t)||^2`` on ``[t0, t0 + 1]``."""
    if not t0 <= t <= t0 + 1.0 + 1e-12:
        raise ValueError("bound holds on [t0, t0 + 1] only")
    f_sq = forcing.dual_norm_sq_integral(t0, t0 + 1.0)
    return (u0_norm_sq + f_sq + c1**2 * DOMAIN_MEASURE) * math.exp((2.0 * c2 + 1.0) * (t - t0))


@dataclass(frozen=True)
class FlatteningReport:
    m: int
    t: float
    delta: float
    measured: float  # max tail energy ||(I - P_m) u(t)||^2
    terms: tuple  # the four analytic terms
    bound: float
    verdict: bool
    recipe_m: tuple  # smallest m making each m-dependent term <= eps/4
    delta_ok: bool  # last term <= eps/4

    def to_dict(self):
        return {
            "m": self.m,
            "t": self.t,
            "delta": self.delta,
            "measured": self.measured,
            "terms": list(self.terms),
            "bound": self.bound,
            "verdict": self.verdict,
            "recipe_m": list(self.recipe_m),
            "delta_ok": self.delta_ok,
        }


def tail_terms(cert: EnergyCertificate, m: int, t: float, delta: float, c1: float, c2: float) -> tuple:
    """The four terms bounding ``||(I - P_m) u(t)||^2``, with ``lam_{m+1} = (m + 1)^2``."""
    lam = float((m + 1) ** 2)
    R2 = cert.R(t) ** 2
    f2 = cert.forcing.dual_norm_sq_integral(t - 2.0, t)
    fd = cert.forcing.dual_norm_sq_integral(t - delta, t)
    return (
        math.exp(-lam) * R2,
        (4 * c2**2 * R2 + 4 * c1**2 * DOMAIN_MEASURE) / (cert.lam1 * lam),
        2.0 * math.exp(-lam * delta) * f2,
        2.0 * fd,
    )


def _smallest_m(lam_needed: float) -> int:
    """Smallest ``m >= 0`` with ``(m + 1)^2 >= lam_needed``."""
    if lam_needed <= 1.0:
        return 0
    m = max(0, math.ceil(math.sqrt(lam_needed)) - 1)
    while (m + 1) ** 2 < lam_needed:
        m += 1
    while m > 0 and m**2 >= lam_needed:
        m -= 1
    return m


def flattening_certificate(
    endpoints,
    m: int,
    t: float,
    delta: float,
    eps: float,
    cert: EnergyCertificate,
    t0: float,
    E_norm: float,
) -> FlatteningReport:
    """Compare measured tail energy at ``t`` with the four-term bound.

    ``endpoints`` are coefficient rows at time ``t`` of solutions started at
    ``t0`` from a set of norm ``E_norm``; the bound requires
    ``t0 <= tau_bar(t - 2, E)``. ``recipe_m`` gives, for each of the three
    ``m``-dependent terms, the smallest ``m`` pushing it below ``eps/4``.
    """
    if not 0 < delta <= 2:
        raise ValueError("delta must lie in (0, 2]")
    if not eps > 0:
        raise ValueError("eps must be positive")
    limit = cert.tau_bar(t - 2.0, E_norm)
    if t0 > limit:
        raise NotAbsorbedError(f"start time {t0} is later than tau_bar(t - 2, E) = {limit}")
    A = np.atleast_2d(np.asarray(endpoints, dtype=float))
    if not 0 <= m < A.shape[1]:
        raise ValueError(f"m must lie in [0, {A.shape[1]})")
    measured = float(np.max(0.5 * math.pi * np.sum(A[:, m:] ** 2, axis=1)))
    c1, c2 = cert.constants[0], cert.constants[1]
    terms = tail_terms(cert, m, t, delta, c1, c2)
    bound = float(sum(terms))

    q = eps / 4.0
    R2 = cert.R(t) ** 2
    f2 = cert.forcing.dual_norm_sq_integral(t - 2.0, t)
    recipe = (
        _smallest_m(math.log(R2 / q)) if R2 > q else 0,
        _smallest_m((4 * c2**2 * R2 + 4 * c1**2 * DOMAIN_MEASURE) / (cert.lam1 * q)),
        _smallest_m(math.log(2.0 * f2 / q) / delta) if 2.0 * f2 > q else 0,
    )
    return FlatteningReport(m, t, delta, measured, terms, bound, measured <= bound, recipe, terms[3] <= q)
