"""Sampled representations of bounded sets and the distances between them.

A state is a finite coordinate vector. Sets are finite point clouds
(:class:`SampledSet`) or simple analytic regions (:class:`Ball`,
:class:`Box`, :class:`RegionUnion`) that only need to answer
"how far is this point from me?".

Every object carries a scalar ``metric_weight`` ``w``; the distance between
two states is ``sqrt(w * sum((x - y)**2))``. For plain Euclidean states
``w = 1``. For coefficients against ``sin(kx)`` on ``(0, pi)`` the
``L^2`` norm of each mode is ``pi/2`` and ``w = pi/2`` (see
:data:`SINE_MODE_WEIGHT`).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

SINE_MODE_WEIGHT = math.pi / 2


class DimensionError(ValueError):
    """Raised when two states or sets do not share a dimension."""


def as_point(x, dim: int | None = None) -> np.ndarray:
    """Validate and return a state as a 1-d float array."""
    p = np.atleast_1d(np.asarray(x, dtype=float))
    if p.ndim != 1 or p.size < 1:
        raise ValueError(f"a state must be a non-empty 1-d vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("state contains NaN or Inf")
    if dim is not None and p.size != dim:
        raise DimensionError(f"expected dimension {dim}, got {p.size}")
    return p


def distance(x, y, weight: float = 1.0) -> float:
    x = as_point(x)
    y = as_point(y)
    if x.size != y.size:
        raise DimensionError(f"dimension mismatch: {x.size} vs {y.size}")
    return float(math.sqrt(weight * float(np.sum((x - y) ** 2))))


def norm(x, weight: float = 1.0) -> float:
    x = as_point(x)
    return float(math.sqrt(weight * float(np.sum(x**2))))


class Region:
    """Anything a point can be measured against."""

    dim: int
    metric_weight: float

    def dist(self, points: np.ndarray) -> np.ndarray:
        """Distance of each row of ``points`` to the region."""
        raise NotImplementedError

    def sampled(self) -> "SampledSet":
        """A finite sample of the region, used where points are required."""
        raise NotImplementedError

    def _check(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.dim:
            raise DimensionError(f"expected dimension {self.dim}, got {pts.shape[1]}")
        return pts


@dataclass(frozen=True, eq=False)
class SampledSet(Region):
    """A finite, optionally weighted, point cloud standing for a bounded set.

    ``points`` has shape ``(n, dim)``. The cloud is immutable; the array is
    copied and flagged read-only on construction.
    """

    points: np.ndarray
    label: str = ""
    metric_weight: float = 1.0
    weights: np.ndarray | None = None
    _tree: cKDTree | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("a sampled set needs at least one point")
        if pts.shape[1] < 1:
            raise ValueError("points must have dimension >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("sampled set contains NaN or Inf")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.weights is not None:
            w = np.array(self.weights, dtype=float)
            if w.shape != (pts.shape[0],) or np.any(w < 0):
                raise ValueError("weights must be one non-negative value per point")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    @classmethod
    def from_points(cls, points: Iterable, label: str = "", metric_weight: float = 1.0):
        pts = [as_point(p) for p in points]
        return cls(np.vstack(pts), label=label, metric_weight=metric_weight)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def tree(self) -> cKDTree:
        # KD-tree on rescaled coordinates so Euclidean queries give weighted distances.
        if self._tree is None:
            object.__setattr__(self, "_tree", cKDTree(self.points * math.sqrt(self.metric_weight)))
        return self._tree

    def dist(self, points) -> np.ndarray:
        pts = self._check(points)
        d, _ = self.tree.query(pts * math.sqrt(self.metric_weight))
        return np.asarray(d, dtype=float)

    def sampled(self) -> "SampledSet":
        return self

    def unique(self, decimals: int = 12) -> "SampledSet":
        """Drop duplicate points (after rounding), keeping first occurrences in order."""
        _, idx = np.unique(np.round(self.points, decimals), axis=0, return_index=True)
        idx = np.sort(idx)
        return SampledSet(self.points[idx], label=self.label, metric_weight=self.metric_weight)

    def union(self, other: "SampledSet", label: str | None = None) -> "SampledSet":
        _check_compatible(self, other)
        return SampledSet(
            np.vstack([self.points, other.points]),
            label=self.label if label is None else label,
            metric_weight=self.metric_weight,
        )

    def sup_norm(self) -> float:
        """``sup`` of the state norms, the ``||B||`` of a bounded set."""
        return float(np.sqrt(self.metric_weight * np.max(np.sum(self.points**2, axis=1))))

    def diameter(self) -> float:
        return diameter(self.points, self.metric_weight)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{i}" for i in range(self.dim)])
        for row in self.points:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, label: str = "", metric_weight: float = 1.0):
        rows = list(csv.reader(io.StringIO(text)))
        return cls(np.array([[float(v) for v in r] for r in rows[1:]]), label, metric_weight)

    def to_json(self) -> list[list[float]]:
        return self.points.tolist()

    @classmethod
    def from_json(cls, data, label: str = "", metric_weight: float = 1.0):
        return cls(np.asarray(data, dtype=float), label=label, metric_weight=metric_weight)


@dataclass(frozen=True, eq=False)
class Ball(Region):
    """Closed ball ``{x : dist(x, center) <= radius}`` in the weighted metric."""

    center: np.ndarray
    radius: float
    metric_weight: float = 1.0
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "center", as_point(self.center))
        if self.radius < 0:
            raise ValueError("radius must be non-negative")

    @property
    def dim(self) -> int:
        return self.center.size

    def dist(self, points) -> np.ndarray:
        pts = self._check(points)
        d = np.sqrt(self.metric_weight * np.sum((pts - self.center) ** 2, axis=1))
        return np.maximum(d - self.radius, 0.0)

    def sampled(self, n_random: int = 0, seed: int = 0) -> SampledSet:
        """Center, the ``2*dim`` axis extremes and optional seeded interior points."""
        scale = self.radius / math.sqrt(self.metric_weight)
        eye = np.eye(self.dim)
        pts = [self.center[None, :], self.center + scale * eye, self.center - scale * eye]
        if n_random > 0:
            rng = np.random.default_rng(seed)
            g = rng.standard_normal((n_random, self.dim))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            r = rng.uniform(0.0, 1.0, size=(n_random, 1)) ** (1.0 / self.dim)
            pts.append(self.center + scale * r * g)
        return SampledSet(np.vstack(pts), label=self.label, metric_weight=self.metric_weight)


@dataclass(frozen=True, eq=False)
class Box(Region):
    """Axis-aligned box ``[lo, hi]``."""

    lo: np.ndarray
    hi: np.ndarray
    metric_weight: float = 1.0
    label: str = ""

    def __post_init__(self):
        lo, hi = as_point(self.lo), as_point(self.hi)
        if lo.size != hi.size or np.any(hi < lo):
            raise ValueError("box needs lo <= hi of equal dimension")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def dist(self, points) -> np.ndarray:
        pts = self._check(points)
        gap = np.maximum(self.lo - pts, 0.0) + np.maximum(pts - self.hi, 0.0)
        return np.sqrt(self.metric_weight * np.sum(gap**2, axis=1))

    def sampled(self, per_axis: int = 11) -> SampledSet:
        axes = [np.linspace(a, b, per_axis if b > a else 1) for a, b in zip(self.lo, self.hi)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        return SampledSet(grid, label=self.label, metric_weight=self.metric_weight)


@dataclass(frozen=True, eq=False)
class RegionUnion(Region):
    parts: tuple
    label: str = ""

    def __post_init__(self):
        if not self.parts:
            raise ValueError("empty union")
        object.__setattr__(self, "parts", tuple(self.parts))
        for p in self.parts[1:]:
            _check_compatible(self.parts[0], p)

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    @property
    def metric_weight(self) -> float:
        return self.parts[0].metric_weight

    def dist(self, points) -> np.ndarray:
        return np.min(np.vstack([p.dist(points) for p in self.parts]), axis=0)

    def sampled(self) -> SampledSet:
        clouds = [p.sampled() for p in self.parts]
        return SampledSet(
            np.vstack([c.points for c in clouds]), label=self.label, metric_weight=self.metric_weight
        )


def _check_compatible(a: Region, b: Region) -> None:
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if not math.isclose(a.metric_weight, b.metric_weight):
        raise ValueError(f"metric weight mismatch: {a.metric_weight} vs {b.metric_weight}")


def semidistance(A: SampledSet, B: Region) -> float:
    """Hausdorff semidistance ``sup_{a in A} inf_{b in B} d(a, b)``.

    Not symmetric: ``semidistance(A, B) == 0`` whenever A's points lie in B.
    """
    _check_compatible(A, B)
    return float(np.max(B.dist(A.points)))


def hausdorff(A: SampledSet, B: SampledSet) -> float:
    return max(semidistance(A, B), semidistance(B, A))


def eps_neighborhood_contains(B: Region, x, eps: float) -> bool:
    """True iff ``dist(x, B) <= eps``."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    return bool(B.dist(as_point(x, B.dim)[None, :])[0] <= eps)


def diameter(points: np.ndarray, weight: float = 1.0, chunk: int = 2048) -> float:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    pts = np.unique(pts, axis=0) * math.sqrt(weight)
    if pts.shape[1] == 1:
        return float(pts.max() - pts.min())
    best = 0.0
    for i in range(0, len(pts), chunk):
        block = pts[i : i + chunk]
        d2 = np.sum(block**2, 1)[:, None] + np.sum(pts**2, 1)[None, :] - 2 * block @ pts.T
        best = max(best, float(np.max(d2)))
    return math.sqrt(max(best, 0.0))


@dataclass(frozen=True, eq=False)
class CoveringProfile:
    """A cover by ``ball_count`` balls of diameter ``delta``."""

    delta: float
    ball_count: int
    centers: np.ndarray
    assignment: np.ndarray


def _lex_order(points: np.ndarray) -> np.ndarray:
    # np.lexsort sorts by the last key first
    return np.lexsort(points.T[::-1])


def farthest_point_traversal(A: SampledSet, k: int | None = None):
    """Farthest-point-first ordering of ``A`` with lexicographic tie-breaking.

    Returns ``(order, radii)`` where ``radii[j]`` is the covering radius of
    ``A`` by the first ``j + 1`` centers of ``order``.
    """
    pts = A.points * math.sqrt(A.metric_weight)
    n = len(pts)
    k = n if k is None else min(k, n)
    lex = _lex_order(A.points)
    rank = np.empty(n, dtype=int)
    rank[lex] = np.arange(n)
    order = [int(lex[0])]
    mind = np.sqrt(np.sum((pts - pts[order[0]]) ** 2, axis=1))
    radii = [float(mind.max())]
    while len(order) < k and radii[-1] > 0.0:
        far = mind.max()
        candidates = np.flatnonzero(mind == far)
        nxt = int(candidates[np.argmin(rank[candidates])])
        order.append(nxt)
        mind = np.minimum(mind, np.sqrt(np.sum((pts - pts[nxt]) ** 2, axis=1)))
        radii.append(float(mind.max()))
    return np.array(order), np.array(radii)


def greedy_cover(A: SampledSet, delta: float) -> CoveringProfile:
    """Cover ``A`` by balls of diameter ``delta`` centred at points of ``A``.

    Centers are added farthest-point-first until every point lies within
    ``delta / 2`` of a center, which uses at most twice the optimal number
    of balls of half the diameter.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    pts = A.points * math.sqrt(A.metric_weight)
    lex = _lex_order(A.points)
    rank = np.empty(len(pts), dtype=int)
    rank[lex] = np.arange(len(pts))
    order = [int(lex[0])]
    mind = np.sqrt(np.sum((pts - pts[order[0]]) ** 2, axis=1))
    owner = np.zeros(len(pts), dtype=int)
    while mind.max() > delta / 2:
        far = mind.max()
        cand = np.flatnonzero(mind == far)
        nxt = int(cand[np.argmin(rank[cand])])
        d = np.sqrt(np.sum((pts - pts[nxt]) ** 2, axis=1))
        closer = d < mind
        owner[closer] = len(order)
        mind = np.where(closer, d, mind)
        order.append(nxt)
    return CoveringProfile(
        delta=float(delta),
        ball_count=len(order),
        centers=A.points[np.array(order)],
        assignment=owner,
    )


def _sweep_count(sorted_x: np.ndarray, delta: float) -> int:
    """Exact minimum number of intervals of length ``delta`` covering sorted 1-d data."""
    count = 0
    i = 0
    n = len(sorted_x)
    while i < n:
        count += 1
        # compare differences, not x_i + delta, so candidate gaps test exactly
        i = int(np.searchsorted(sorted_x - sorted_x[i], delta, side="right"))
    return count


def kuratowski_proxy(A: SampledSet, budget: int) -> float:
    """Smallest ``delta`` such that ``A`` splits into ``<= budget`` pieces of diameter ``<= delta``.

    A finite set has Kuratowski measure zero, so this budgeted value is the
    quantity used to watch a family of clouds "lose compactness". The search
    bisects over the finite set of candidate diameters, so the answer is one
    of the pairwise distances of ``A``. It is exact in one dimension (interval
    sweep). In higher dimensions pieces come from the farthest-point
    traversal and the value is an upper bound within a factor 2 of optimal.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    pts = A.unique().points
    n = len(pts)
    if budget >= n:
        return 0.0
    scale = math.sqrt(A.metric_weight)
    if A.dim == 1:
        x = np.sort(pts[:, 0]) * scale
        cand = np.unique((x[None, :] - x[:, None])[np.triu_indices(n, 1)])
        lo, hi = 0, len(cand) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if _sweep_count(x, cand[mid]) <= budget:
                hi = mid
            else:
                lo = mid + 1
        return float(cand[lo])
    cloud = SampledSet(pts, metric_weight=A.metric_weight)
    order, _ = farthest_point_traversal(cloud, budget)
    spts = pts * scale
    best = math.inf
    for k in range(1, len(order) + 1):
        centers = spts[order[:k]]
        d2 = np.sum((spts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        owner = np.argmin(d2, axis=1)
        worst = max(diameter(spts[owner == j]) for j in range(k))
        best = min(best, worst)
    return float(best)


@dataclass(frozen=True, eq=False)
class NonautonomousSet:
    """A set indexed by a strictly increasing, finite time grid."""

    times: tuple
    sets: tuple

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        sets = tuple(self.sets)
        if len(times) != len(sets) or not times:
            raise ValueError("times and sets must be non-empty and of equal length")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "sets", sets)

    @classmethod
    def constant(cls, times: Sequence[float], region: Region):
        return cls(tuple(times), tuple(region for _ in times))

    def at(self, t: float) -> Region:
        for s, r in zip(self.times, self.sets):
            if math.isclose(s, t, rel_tol=0.0, abs_tol=1e-12):
                return r
        raise KeyError(f"time {t} is not on the grid {self.times}")

    def to_json(self) -> str:
        payload = {repr(t): s.sampled().to_json() for t, s in zip(self.times, self.sets)}
        return json.dumps(payload, sort_keys=False)

    @classmethod
    def from_json(cls, text: str, metric_weight: float = 1.0):
        data = json.loads(text)
        times = sorted(data, key=float)
        return cls(
            tuple(float(t) for t in times),
            tuple(SampledSet.from_json(data[t], metric_weight=metric_weight) for t in times),
        )
