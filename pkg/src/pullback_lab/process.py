"""Multivalued processes and the diagnostics run against them.

A :class:`Process` wraps an ``evolve(t, tau, seeds, branch_budget, rng_seed)``
callable returning a finite sample of ``U(t, tau; seeds)``. Everything in
this module only ever sees those samples, so every inclusion verdict is a
necessary-condition check: sound for refuting an inclusion, sampled when
confirming one. Reports carry that caveat verbatim.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, is_dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .metric import (
    NonautonomousSet,
    Region,
    SampledSet,
    as_point,
    diameter,
    distance,
    semidistance,
)

SAMPLING_CAVEAT = (
    "images are finite branch samples; inclusion verdicts refute soundly "
    "and confirm only up to sampling density"
)

KINDS = ("general", "strict", "semiflow")

#: default inclusion tolerance for closed-form systems
CLOSED_FORM_TOL = 1e-6
#: default inclusion tolerance for solver ensembles
ENSEMBLE_TOL = 1e-3


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("PULLBACK_LAB_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items) -> list:
    """Ordered map, threaded up to ``PULLBACK_LAB_THREADS`` workers."""
    items = list(items)
    n = thread_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


EvolveFn = Callable[[float, float, SampledSet, int, int], SampledSet]


@dataclass(frozen=True)
class Process:
    """An evaluatable m-process.

    ``kind`` is ``"general"``, ``"strict"`` or ``"semiflow"``; a semiflow
    depends only on ``t - tau``. ``discrete`` processes accept integer lags
    only. The identity axiom ``U(t, t; S) = S`` is enforced here and never
    reaches ``evolve_fn``.
    """

    evolve_fn: EvolveFn
    kind: str
    dimension: int
    name: str = ""
    metric_weight: float = 1.0
    discrete: bool = False
    strict: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown process kind {self.kind!r}")

    def evolve(
        self, t: float, tau: float, seeds: SampledSet, branch_budget: int = 1, rng_seed: int = 0
    ) -> SampledSet:
        if tau > t:
            raise ValueError(f"need tau <= t, got tau={tau}, t={t}")
        if seeds.dim != self.dimension:
            raise ValueError(f"{self.name}: seeds have dimension {seeds.dim}, expected {self.dimension}")
        if branch_budget < 1:
            raise ValueError("branch_budget must be >= 1")
        if t == tau:
            return seeds
        if self.discrete and not float(t - tau).is_integer():
            raise ValueError(f"{self.name} is discrete; lag {t - tau} is not an integer")
        out = self.evolve_fn(t, tau, seeds, branch_budget, rng_seed)
        if out.metric_weight != self.metric_weight:
            out = SampledSet(out.points, label=out.label, metric_weight=self.metric_weight)
        return out

    def point(self, x, label: str = "") -> SampledSet:
        return SampledSet(as_point(x, self.dimension)[None, :], label=label, metric_weight=self.metric_weight)

    def cloud(self, points, label: str = "") -> SampledSet:
        return SampledSet(np.asarray(points, dtype=float), label=label, metric_weight=self.metric_weight)


@dataclass(frozen=True)
class TauSchedule:
    """Backward lags ``t - tau_n``; strictly increasing, so ``tau_n`` decreases.

    ``taus(t)`` gives the start times for end time ``t``.
    """

    lags: tuple

    def __post_init__(self):
        lags = tuple(float(x) for x in self.lags)
        if not lags:
            raise ValueError("schedule must be non-empty")
        if lags[0] < 0 or any(b <= a for a, b in zip(lags, lags[1:])):
            raise ValueError("lags must be non-negative and strictly increasing")
        object.__setattr__(self, "lags", lags)

    @classmethod
    def geometric(cls, h: float = 1.0, r: float = 1.5, steps: int = 20, integer: bool = False):
        lags = [h * r**n for n in range(steps)]
        if integer:
            lags = sorted({float(max(1, round(x))) for x in lags})
        return cls(tuple(lags))

    @classmethod
    def arithmetic(cls, step: float, count: int, start: float | None = None):
        start = step if start is None else start
        return cls(tuple(start + step * n for n in range(count)))

    def taus(self, t: float) -> list[float]:
        return [t - lag for lag in self.lags]

    def __len__(self) -> int:
        return len(self.lags)


def _images(p: Process, t: float, B: SampledSet, sched: TauSchedule, budget: int, seed: int):
    return parallel_map(lambda tau: p.evolve(t, tau, B, budget, seed), sched.taus(t))


def _nonincreasing(values: Sequence[float], slack: float) -> bool:
    return all(b <= a + slack for a, b in zip(values, values[1:]))


def _final_quartile(values: Sequence[float]) -> list[float]:
    n = len(values)
    return list(values[n - max(2, n // 4) :]) if n >= 2 else list(values)


def jsonable(obj):
    """Convert report objects to plain JSON types (inf becomes the string "inf")."""
    if isinstance(obj, SampledSet):
        return obj.to_json()
    if isinstance(obj, NonautonomousSet):
        return {repr(t): jsonable(s.sampled()) for t, s in zip(obj.times, obj.sets)}
    if is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return obj.to_dict()
        return jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


# ---------------------------------------------------------------- axioms


@dataclass
class AxiomProbe:
    t: float
    s: float
    tau: float
    identity_residual: float
    subcomposition_residual: float
    reverse_residual: float


@dataclass
class AxiomReport:
    probes: list
    tol: float
    is_process: bool
    is_strict: bool
    caveat: str = SAMPLING_CAVEAT

    def to_dict(self):
        return {
            "probes": [jsonable(asdict(p)) for p in self.probes],
            "tol": self.tol,
            "is_process": self.is_process,
            "is_strict": self.is_strict,
            "max_subcomposition_residual": max(p.subcomposition_residual for p in self.probes),
            "max_reverse_residual": max(p.reverse_residual for p in self.probes),
            "caveat": self.caveat,
        }


def check_axioms(
    p: Process,
    probes: Sequence[tuple],
    tol: float = CLOSED_FORM_TOL,
    branch_budget: int = 1,
    rng_seed: int = 0,
    oracle_budget: int | None = None,
) -> AxiomReport:
    """Residuals of ``U(t,t;x) = {x}`` and ``U(t,tau;x) ⊂ U(t,s;U(s,tau;x))``.

    The forward residual compares a ``branch_budget`` image against the
    composition built with ``oracle_budget`` branches per leg; the reverse
    residual (strictness) swaps the roles.
    """
    ob = branch_budget if oracle_budget is None else oracle_budget
    rows = []
    for t, s, tau, x in probes:
        if not t >= s >= tau:
            raise ValueError(f"probe needs t >= s >= tau, got {(t, s, tau)}")
        X = p.point(x)
        same = p.evolve(t, t, X, branch_budget, rng_seed)
        identity = max(semidistance(same, X), semidistance(X, same))
        direct = p.evolve(t, tau, X, branch_budget, rng_seed)
        composed_oracle = p.evolve(t, s, p.evolve(s, tau, X, ob, rng_seed), ob, rng_seed)
        sub = semidistance(direct, composed_oracle)
        composed = p.evolve(t, s, p.evolve(s, tau, X, branch_budget, rng_seed), branch_budget, rng_seed)
        direct_oracle = p.evolve(t, tau, X, ob, rng_seed)
        rev = semidistance(composed, direct_oracle)
        rows.append(AxiomProbe(float(t), float(s), float(tau), identity, sub, rev))
    is_process = all(r.identity_residual == 0.0 and r.subcomposition_residual <= tol for r in rows)
    is_strict = is_process and all(r.reverse_residual <= tol for r in rows)
    return AxiomReport(rows, tol, is_process, is_strict)


# ---------------------------------------------------------------- omega limits


@dataclass
class OmegaLimitResult:
    limit_set: SampledSet | None
    converged: bool
    attraction_curve: list
    late_diameters: list = field(default_factory=list)
    drifting: bool = False
    recurrent_points: int = 0
    caveat: str = SAMPLING_CAVEAT

    def to_dict(self):
        return {
            "converged": self.converged,
            "drifting": self.drifting,
            "limit_size": 0 if self.limit_set is None else len(self.limit_set),
            "limit_set": None if self.limit_set is None else self.limit_set.to_json(),
            "attraction_curve": jsonable(self.attraction_curve),
            "late_diameters": jsonable(self.late_diameters),
            "recurrent_points": self.recurrent_points,
            "caveat": self.caveat,
        }


def _late_union_diameters(images: Sequence[SampledSet], weight: float) -> list[float]:
    """Diameter of ``I_0 ∪ ... ∪ I_j`` for each ``j``, built incrementally."""
    scale = math.sqrt(weight)
    acc = np.empty((0, images[0].dim))
    out = []
    best = 0.0
    for img in images:
        new = np.unique(img.points, axis=0) * scale
        if len(acc):
            for i in range(0, len(new), 1024):
                blk = new[i : i + 1024]
                d2 = np.sum(blk**2, 1)[:, None] + np.sum(acc**2, 1)[None, :] - 2 * blk @ acc.T
                best = max(best, math.sqrt(max(float(d2.max()), 0.0)))
        best = max(best, diameter(new))
        acc = np.unique(np.vstack([acc, new]), axis=0)
        out.append(best)
    return out


def _eps_net(points: np.ndarray, priority: np.ndarray, eps: float, weight: float) -> np.ndarray:
    """Greedy eps-net of ``points`` visiting them in ``priority`` order."""
    scale = math.sqrt(weight)
    chosen: list[int] = []
    for i in priority:
        if not chosen:
            chosen.append(int(i))
            continue
        d = np.sqrt(np.sum((points[chosen] * scale - points[i] * scale) ** 2, axis=1))
        if d.min() > eps:
            chosen.append(int(i))
    return np.array(chosen, dtype=int)


def omega_limit(
    p: Process,
    t: float,
    B: SampledSet,
    sched: TauSchedule,
    cluster_eps: float,
    tol: float | None = None,
    branch_budget: int = 1,
    rng_seed: int = 0,
    min_hits: int = 3,
    drift_window: int = 5,
) -> OmegaLimitResult:
    """Sampled pullback omega-limit ``omega(t, B)``.

    Images ``U(t, tau_n; B)`` are collected along the schedule. A point of
    the final half of the schedule is an accumulation candidate when at
    least ``min_hits`` distinct ``tau_n`` in that half put an image point
    within ``cluster_eps`` of it. Candidates are grouped by single linkage
    at ``cluster_eps`` and each group is thinned to a ``cluster_eps``-net,
    preferring points from the earliest start times. The run is declared
    non-convergent when the diameter of the late union keeps growing by
    more than ``cluster_eps`` over the last ``drift_window`` schedule points.
    """
    if len(sched) < 2 * min_hits:
        raise ValueError(f"schedule needs at least {2 * min_hits} points")
    tol = cluster_eps if tol is None else tol
    taus = sched.taus(t)
    images = _images(p, t, B, sched, branch_budget, rng_seed)
    half = len(images) // 2
    late = images[half:]

    diams = _late_union_diameters(late, p.metric_weight)
    window = diams[-drift_window:]
    drifting = len(window) >= 2 and all(b - a > cluster_eps for a, b in zip(window, window[1:]))

    scale = math.sqrt(p.metric_weight)
    trees = [cKDTree(img.points * scale) for img in late]
    pts = np.vstack([img.points for img in late])
    tag = np.concatenate([np.full(len(img), j) for j, img in enumerate(late)])
    hits = np.zeros(len(pts), dtype=int)
    for tree in trees:
        d, _ = tree.query(pts * scale, distance_upper_bound=cluster_eps * (1 + 1e-12))
        hits += np.isfinite(d)
    keep = hits >= min_hits
    limit = None
    if keep.any():
        rp, rtag = pts[keep], tag[keep]
        # collapse exact repeats, remembering the latest schedule index
        uniq, inv = np.unique(np.round(rp, 13), axis=0, return_inverse=True)
        inv = inv.ravel()
        latest = np.full(len(uniq), -1)
        np.maximum.at(latest, inv, rtag)
        first = np.full(len(uniq), len(rp))
        np.minimum.at(first, inv, np.arange(len(rp)))
        reps = rp[first]
        pairs = cKDTree(reps * scale).query_pairs(cluster_eps * (1 + 1e-12), output_type="ndarray")
        graph = coo_matrix(
            (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])) if len(pairs) else ([], ([], [])),
            shape=(len(reps), len(reps)),
        )
        ncomp, comp = connected_components(graph, directed=False)
        chosen = []
        for c in range(ncomp):
            members = np.flatnonzero(comp == c)
            order = members[np.lexsort(tuple(reps[members].T[::-1]) + (-latest[members],))]
            net = _eps_net(reps, order, cluster_eps, p.metric_weight)
            chosen.extend(net.tolist())
        chosen_pts = reps[np.array(chosen)]
        chosen_pts = chosen_pts[np.lexsort(chosen_pts.T[::-1])]
        limit = SampledSet(chosen_pts, label=f"omega({t:g},{B.label})", metric_weight=p.metric_weight)

    if limit is None:
        curve = [(tau, math.inf) for tau in taus]
    else:
        curve = [(tau, semidistance(img, limit)) for tau, img in zip(taus, images)]
    tail = _final_quartile([c for _, c in curve])
    converged = limit is not None and not drifting and max(tail) <= tol
    return OmegaLimitResult(
        limit_set=limit,
        converged=bool(converged),
        attraction_curve=curve,
        late_diameters=diams,
        drifting=bool(drifting),
        recurrent_points=int(keep.sum()),
    )


# ---------------------------------------------------------------- attraction


@dataclass
class AttractionResult:
    curve: list
    verdict: bool
    tol: float
    caveat: str = SAMPLING_CAVEAT

    def to_dict(self):
        return {"curve": jsonable(self.curve), "verdict": self.verdict, "tol": self.tol, "caveat": self.caveat}


def _region_at(K, t: float) -> Region:
    return K.at(t) if isinstance(K, NonautonomousSet) else K


def attraction_test(
    p: Process,
    K,
    B: SampledSet,
    t: float,
    sched: TauSchedule,
    tol: float = CLOSED_FORM_TOL,
    branch_budget: int = 1,
    rng_seed: int = 0,
) -> AttractionResult:
    """Curve ``dist(U(t, tau_n; B), K(t))`` and its pullback-attraction verdict.

    The verdict needs the last value ``<= tol`` and a curve that does not rise
    by more than ``tol`` between consecutive points of its final quartile.
    """
    Kt = _region_at(K, t)
    images = _images(p, t, B, sched, branch_budget, rng_seed)
    curve = [(tau, semidistance(img, Kt)) for tau, img in zip(sched.taus(t), images)]
    values = [c for _, c in curve]
    verdict = values[-1] <= tol and _nonincreasing(_final_quartile(values), tol)
    return AttractionResult(curve, bool(verdict), tol)


# ---------------------------------------------------------------- dissipativity


@dataclass
class DissipativityReport:
    absorbing: bool
    entering_times: dict
    entering_taus: dict
    monotone: bool
    backward_bounded: bool
    point_dissipative: bool
    witnesses: list
    envelope_diameters: dict
    tol: float
    caveat: str = SAMPLING_CAVEAT

    def to_dict(self):
        key = lambda k: f"{k[0]!r}|{k[1]}"  # noqa: E731
        return {
            "absorbing": self.absorbing,
            "entering_times": {key(k): jsonable(v) for k, v in self.entering_times.items()},
            "entering_taus": {key(k): jsonable(v) for k, v in self.entering_taus.items()},
            "monotone": self.monotone,
            "backward_bounded": self.backward_bounded,
            "point_dissipative": self.point_dissipative,
            "witnesses": jsonable(self.witnesses),
            "envelope_diameters": {repr(k): jsonable(v) for k, v in self.envelope_diameters.items()},
            "tol": self.tol,
            "caveat": self.caveat,
        }


def _entering_index(inside: np.ndarray) -> int | None:
    """First schedule index from which every later image is inside."""
    if not inside[-1]:
        return None
    outside = np.flatnonzero(~inside)
    return 0 if len(outside) == 0 else int(outside[-1]) + 1


def dissipativity_classify(
    p: Process,
    candidate: NonautonomousSet,
    test_sets: Sequence[SampledSet],
    times: Sequence[float],
    sched: TauSchedule,
    tol: float = CLOSED_FORM_TOL,
    bound_cap: float = 1e6,
    branch_budget: int = 1,
    rng_seed: int = 0,
) -> DissipativityReport:
    """Classify a candidate absorbing family against sampled bounded sets.

    ``entering_times`` holds the elapsed lag ``t - tau_bar`` for the latest
    scheduled ``tau_bar`` after which every image stays within ``tol`` of the
    candidate; it is ``inf`` when the last scheduled image is still outside.
    ``point_dissipative`` repeats the test one point at a time, within the
    schedule horizon.
    """
    entering, entering_taus, witnesses = {}, {}, []
    point_ok = True
    for t in times:
        Ct = candidate.at(t)
        taus = sched.taus(t)
        for E in test_sets:
            images = _images(p, t, E, sched, branch_budget, rng_seed)
            inside = np.array([semidistance(img, Ct) <= tol for img in images])
            idx = _entering_index(inside)
            key = (float(t), E.label)
            if idx is None:
                entering[key] = math.inf
                entering_taus[key] = -math.inf
                for tau, lag, img, ok in zip(taus, sched.lags, images, inside):
                    if ok:
                        continue
                    d = Ct.dist(img.points)
                    worst = int(np.argmax(d))
                    w = {
                        "t": float(t),
                        "set": E.label,
                        "tau": tau,
                        "lag": lag,
                        "point": img.points[worst].tolist(),
                        "distance": float(d[worst]),
                    }
                    if len(img) == len(E) * branch_budget:
                        w["seed"] = E.points[worst // branch_budget].tolist()
                    witnesses.append(w)
            else:
                entering[key] = sched.lags[idx]
                entering_taus[key] = taus[idx]
            if point_ok:
                for x in E.points:
                    X = p.point(x)
                    flags = np.array(
                        [semidistance(p.evolve(t, tau, X, branch_budget, rng_seed), Ct) <= tol for tau in taus]
                    )
                    if _entering_index(flags) is None:
                        point_ok = False
                        break
    absorbing = all(math.isfinite(v) for v in entering.values())

    ctimes = candidate.times
    samples = [candidate.sets[i].sampled() for i in range(len(ctimes))]
    monotone = all(
        semidistance(samples[i], candidate.sets[j]) <= tol
        for j in range(len(ctimes))
        for i in range(j)
    )
    env = {}
    for j, t in enumerate(ctimes):
        pts = np.vstack([s.points for s in samples[: j + 1]])
        env[t] = diameter(pts, p.metric_weight)
    backward_bounded = all(math.isfinite(v) and v <= bound_cap for v in env.values())
    return DissipativityReport(
        absorbing=bool(absorbing),
        entering_times=entering,
        entering_taus=entering_taus,
        monotone=bool(monotone),
        backward_bounded=bool(backward_bounded),
        point_dissipative=bool(point_ok),
        witnesses=witnesses,
        envelope_diameters=env,
        tol=tol,
    )


@dataclass
class PointDissipativityReport:
    entering_times: list
    passed: bool
    tol: float
    caveat: str = SAMPLING_CAVEAT

    def to_dict(self):
        return {"entering_times": jsonable(self.entering_times), "passed": self.passed, "tol": self.tol, "caveat": self.caveat}


def point_dissipativity_test(
    p: Process,
    candidate: Region,
    points: Sequence,
    times: Sequence[float],
    tol: float = CLOSED_FORM_TOL,
    refine: bool = True,
    branch_budget: int = 1,
    rng_seed: int = 0,
) -> PointDissipativityReport:
    """Per-point entering times ``t_x`` with ``S(t; x)`` inside for sampled ``t >= t_x``.

    ``times`` is the elapsed-time grid (include ``0``). For continuous-time
    semiflows the crossing between the last outside and first inside sample
    is refined by bisection; discrete semiflows report the grid value.
    """
    if p.kind != "semiflow":
        raise ValueError("point dissipativity is defined for semiflows")
    grid = sorted(float(s) for s in times)

    def inside(x, s):
        return semidistance(p.evolve(s, 0.0, p.point(x), branch_budget, rng_seed), candidate) <= tol

    out = []
    for x in points:
        flags = np.array([inside(x, s) for s in grid])
        idx = _entering_index(flags)
        if idx is None:
            out.append(math.inf)
            continue
        t_in = grid[idx]
        if refine and not p.discrete and idx > 0:
            lo, hi = grid[idx - 1], t_in
            for _ in range(200):
                if hi - lo <= 1e-15 * max(1.0, hi):
                    break
                mid = 0.5 * (lo + hi)
                if mid in (lo, hi):
                    break
                if inside(x, mid):
                    hi = mid
                else:
                    lo = mid
            t_in = hi
        out.append(t_in)
    return PointDissipativityReport(out, all(math.isfinite(v) for v in out), tol)


# ---------------------------------------------------------------- flattening


@dataclass
class FlatteningResult:
    sup_tail: float
    tails: list
    m: int
    caveat: str = SAMPLING_CAVEAT

    def to_dict(self):
        return {"sup_tail": self.sup_tail, "tails": jsonable(self.tails), "m": self.m, "caveat": self.caveat}


def tail_norm(points: np.ndarray, m: int, weight: float) -> np.ndarray:
    """Norm of the coordinates beyond the first ``m`` (the ``(I - P_m)`` part)."""
    return np.sqrt(weight * np.sum(np.atleast_2d(points)[:, m:] ** 2, axis=1))


def flattening_test(
    p: Process,
    B: SampledSet,
    t: float,
    m: int,
    sched: TauSchedule,
    tau_max: float | None = None,
    branch_budget: int = 1,
    rng_seed: int = 0,
) -> FlatteningResult:
    """``sup`` over scheduled ``s <= tau_max`` of ``||(I - P_m) U(t, s; B)||``.

    ``P_m`` keeps the first ``m`` coordinates.
    """
    if not 0 <= m < p.dimension:
        raise ValueError(f"m must lie in [0, {p.dimension}), got {m}")
    tau_max = t if tau_max is None else tau_max
    taus = [tau for tau in sched.taus(t) if tau <= tau_max]
    if not taus:
        raise ValueError("no scheduled start time is <= tau_max")
    tails = []
    for tau in taus:
        img = p.evolve(t, tau, B, branch_budget, rng_seed)
        tails.append((tau, float(tail_norm(img.points, m, p.metric_weight).max())))
    return FlatteningResult(max(v for _, v in tails), tails, m)


# ---------------------------------------------------------------- closedness


@dataclass
class ClosednessWitness:
    t: float
    t_star: float
    eta_seq: list
    xi_seq: list
    limit_eta: list
    limit_xi: list | None
    gap: float
    verdict: str  # "violation", "pass" or "inconclusive"
    tol: float
    caveat: str = SAMPLING_CAVEAT

    @property
    def violation(self) -> bool:
        return self.verdict == "violation"

    def to_dict(self):
        d = jsonable(asdict(self))
        d["violation"] = self.violation
        return d


def closedness_probe(
    p: Process,
    t: float,
    t_star: float,
    eta_seq: Sequence,
    eta_limit,
    tol: float = CLOSED_FORM_TOL,
    conv_tol: float = 1e-3,
    branch_budget: int = 1,
    rng_seed: int = 0,
) -> ClosednessWitness:
    """Test the closed-graph implication for ``U(t, t - t_star; .)``.

    ``eta_seq`` should converge to ``eta_limit``. Each branch of the final
    image is traced backwards through the earlier images by nearest
    neighbour, giving candidate sequences ``xi_n``; converged candidates
    (last two terms within ``conv_tol``) are compared with
    ``U(t, t - t_star; eta_limit)``. The largest such gap is reported.
    """
    if t_star <= 0:
        raise ValueError("t_star must be positive")
    tau = t - t_star
    etas = [as_point(e, p.dimension) for e in eta_seq]
    eta_lim = as_point(eta_limit, p.dimension)
    if len(etas) < 2:
        raise ValueError("need at least two generator terms")
    w = p.metric_weight
    images = [p.evolve(t, tau, p.point(e), branch_budget, rng_seed) for e in etas]
    target = p.evolve(t, tau, p.point(eta_lim), branch_budget, rng_seed)
    eta_gap = distance(etas[-1], eta_lim, w)
    best_gap, best_seq = -math.inf, None
    converged_any = False
    for start in images[-1].points:
        seq = [start]
        for img in reversed(images[:-1]):
            d = np.sqrt(w * np.sum((img.points - seq[-1]) ** 2, axis=1))
            seq.append(img.points[int(np.argmin(d))])
        seq.reverse()
        if distance(seq[-1], seq[-2], w) > conv_tol:
            continue
        converged_any = True
        gap = float(target.dist(seq[-1][None, :])[0])
        if gap > best_gap:
            best_gap, best_seq = gap, seq
    if eta_gap > conv_tol or not converged_any:
        return ClosednessWitness(
            t, t_star, [e.tolist() for e in etas], [], eta_lim.tolist(), None, math.nan, "inconclusive", tol
        )
    verdict = "violation" if best_gap > tol else "pass"
    return ClosednessWitness(
        t,
        t_star,
        [e.tolist() for e in etas],
        [x.tolist() for x in best_seq],
        eta_lim.tolist(),
        best_seq[-1].tolist(),
        best_gap,
        verdict,
        tol,
    )


# ---------------------------------------------------------------- attractor


class AttractorConstructionError(RuntimeError):
    def __init__(self, t: float, result: OmegaLimitResult):
        super().__init__(f"omega limit did not converge at t={t}")
        self.t = t
        self.result = result


@dataclass
class AttractorResult:
    attractor: NonautonomousSet
    omega: dict
    attraction: dict
    caveat: str = SAMPLING_CAVEAT

    def to_dict(self):
        return {
            "attractor": jsonable(self.attractor),
            "sizes": {repr(t): len(s) for t, s in zip(self.attractor.times, self.attractor.sets)},
            "omega": {repr(t): r.to_dict() for t, r in self.omega.items()},
            "attraction": {f"{k[0]!r}|{k[1]}": v.to_dict() for k, v in self.attraction.items()},
            "all_attracted": all(v.verdict for v in self.attraction.values()),
            "caveat": self.caveat,
        }


def attractor_construct(
    p: Process,
    B0: NonautonomousSet,
    times: Sequence[float],
    sched: TauSchedule,
    cluster_eps: float,
    test_sets: Sequence[SampledSet] = (),
    tol: float = CLOSED_FORM_TOL,
    branch_budget: int = 1,
    rng_seed: int = 0,
) -> AttractorResult:
    """``A(t) = omega(t, B0(t))`` on each requested time, with attraction checks.

    ``B0`` should be a monotone absorbing family (see
    :func:`dissipativity_classify`); analytic regions are sampled first.
    """
    sets, omegas, attraction = [], {}, {}
    for t in times:
        seeds = B0.at(t).sampled()
        res = omega_limit(p, t, seeds, sched, cluster_eps, tol=max(tol, cluster_eps),
                          branch_budget=branch_budget, rng_seed=rng_seed)
        if not res.converged:
            raise AttractorConstructionError(t, res)
        omegas[float(t)] = res
        sets.append(res.limit_set)
    A = NonautonomousSet(tuple(float(t) for t in times), tuple(sets))
    for t in times:
        for E in test_sets:
            attraction[(float(t), E.label)] = attraction_test(
                p, A, E, t, sched, tol=tol, branch_budget=branch_budget, rng_seed=rng_seed
            )
    return AttractorResult(A, omegas, attraction)


# ---------------------------------------------------------------- invariance


@dataclass
class InvarianceReport:
    rows: list
    negatively_invariant: bool
    invariant: bool
    tol: float
    caveat: str = SAMPLING_CAVEAT

    def to_dict(self):
        return jsonable(asdict(self))


def invariance_check(
    p: Process,
    A: NonautonomousSet,
    pairs: Sequence[tuple],
    tol: float = CLOSED_FORM_TOL,
    branch_budget: int = 1,
    rng_seed: int = 0,
) -> InvarianceReport:
    """Residuals of ``A(t) ⊂ U(t, s; A(s))`` and of the reverse inclusion."""
    rows = []
    for s, t in pairs:
        if s > t:
            raise ValueError(f"need s <= t, got {(s, t)}")
        As, At = A.at(s).sampled(), A.at(t).sampled()
        img = p.evolve(t, s, As, branch_budget, rng_seed)
        neg = semidistance(At, img)
        fwd = semidistance(img, At)
        rows.append({"s": float(s), "t": float(t), "negative_residual": neg, "forward_residual": fwd})
    negative = all(r["negative_residual"] <= tol for r in rows)
    full = negative and all(r["forward_residual"] <= tol for r in rows)
    return InvarianceReport(rows, bool(negative), bool(full), tol)
