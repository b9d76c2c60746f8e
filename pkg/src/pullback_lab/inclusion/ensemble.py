"""The inclusion as a multivalued process sampled by selection ensembles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..metric import SINE_MODE_WEIGHT, SampledSet
from ..process import Process
from .galerkin import SolverConfig, solve_ensemble
from .problem import Forcing, Nonlinearity, make_forcing, make_nonlinearity

DEFAULT_MOLLIFIERS = (4, 8, 16, 32)


def design(rng_seed: int, budget: int, mollifier_indices=DEFAULT_MOLLIFIERS, thetas=None):
    """First ``budget`` design points ``(n_moll, theta)`` of the stream seeded by ``rng_seed``.

    Points are drawn one at a time, so the design for a budget ``b`` is a
    prefix of the design for any larger budget.
    """
    rng = np.random.default_rng(rng_seed)
    out = []
    for _ in range(budget):
        n = int(mollifier_indices[int(rng.integers(len(mollifier_indices)))])
        if thetas:
            th = float(thetas[int(rng.integers(len(thetas)))])
        else:
            th = float(rng.uniform(0.0, 1.0))
        out.append((n, th))
    return out


@dataclass(frozen=True)
class InclusionProcess(Process):
    nl: Nonlinearity | None = None
    forcing: Forcing | None = None
    cfg: SolverConfig | None = None
    mollifier_indices: tuple = DEFAULT_MOLLIFIERS
    thetas: tuple = field(default_factory=tuple)

    def design(self, budget: int, rng_seed: int):
        return design(rng_seed, budget, self.mollifier_indices, self.thetas)


def inclusion_process(
    modes: int = 8,
    dt: float = 1e-3,
    quad_points: int | None = None,
    nonlinearity: str = "heaviside",
    nonlinearity_params: dict | None = None,
    forcing: str = "zero",
    forcing_params: dict | None = None,
    mollifier_indices=DEFAULT_MOLLIFIERS,
    thetas=None,
) -> InclusionProcess:
    """Multivalued process whose images are ensemble endpoints.

    Every seed is run with each of the first ``branch_budget`` design
    points; the image rows are ordered seed-major. The image is a finite
    under-approximation of the full solution set.
    """
    nl = make_nonlinearity(nonlinearity, **(nonlinearity_params or {}))
    f = make_forcing(forcing, **(forcing_params or {}))
    cfg = SolverConfig(modes=modes, dt=dt, quad_points=quad_points)
    molls = tuple(int(n) for n in mollifier_indices)
    ths = tuple(float(x) for x in (thetas or ()))

    def evolve(t, tau, seeds, budget, rng_seed):
        pts = seeds.points
        d = design(rng_seed, budget, molls, ths)
        U0 = np.repeat(pts, budget, axis=0)
        n_moll = np.tile([n for n, _ in d], len(pts))
        theta = np.tile([th for _, th in d], len(pts))
        out = solve_ensemble(U0, tau, t, cfg, nl, f, n_moll, theta)
        return SampledSet(out, label=seeds.label, metric_weight=SINE_MODE_WEIGHT)

    return InclusionProcess(
        evolve,
        kind="strict",
        dimension=modes,
        name="inclusion",
        metric_weight=SINE_MODE_WEIGHT,
        strict=True,
        nl=nl,
        forcing=f,
        cfg=cfg,
        mollifier_indices=molls,
        thetas=ths,
    )
