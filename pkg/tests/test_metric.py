import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from pullback_lab.metric import (
    SINE_MODE_WEIGHT,
    Ball,
    Box,
    DimensionError,
    NonautonomousSet,
    RegionUnion,
    SampledSet,
    diameter,
    distance,
    eps_neighborhood_contains,
    greedy_cover,
    hausdorff,
    kuratowski_proxy,
    semidistance,
)


def cloud(*pts):
    return SampledSet(np.array(pts, dtype=float).reshape(len(pts), -1))


# ---------------------------------------------------------------- distance


def test_distance_pythagorean():
    assert distance([0, 0], [3, 4]) == 5.0


def test_distance_identity():
    assert distance([1.5, -2.0], [1.5, -2.0]) == 0.0


def test_distance_dimension_mismatch():
    with pytest.raises(DimensionError):
        distance([0, 0], [1, 2, 3])


def test_distance_rejects_nan():
    with pytest.raises(ValueError):
        distance([np.nan], [0.0])


def test_sine_mode_distance_matches_l2_quadrature():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=5), rng.normal(size=5)

    def diff(x):
        k = np.arange(1, 6)
        return float(np.sum((a - b) * np.sin(k * x)))

    oracle = math.sqrt(quad(lambda x: diff(x) ** 2, 0, math.pi, limit=200)[0])
    assert distance(a, b, SINE_MODE_WEIGHT) == pytest.approx(oracle, rel=1e-10)


# ---------------------------------------------------------------- semidistance


def test_semidistance_nearest_point():
    assert semidistance(cloud([1.0]), cloud([0.0], [3.0])) == 1.0


def test_semidistance_subset_is_zero():
    assert semidistance(cloud([0.0], [3.0]), cloud([3.0], [0.0], [7.0])) == 0.0


def test_semidistance_grid_oracle():
    M = 2.0
    grid = Box([0, 0], [1, M]).sampled(per_axis=21)
    A = cloud([0.0, 1.5 * M])
    brute = max(min(distance(a, g) for g in grid.points) for a in A.points)
    assert semidistance(A, grid) == pytest.approx(brute, abs=1e-15)
    assert abs(semidistance(A, grid) - 1.0) <= M / 20


def test_semidistance_is_not_symmetric():
    A = cloud([0.0])
    B = cloud([0.0], [5.0])
    assert semidistance(A, B) == 0.0
    assert semidistance(B, A) == 5.0


def test_semidistance_against_analytic_regions():
    pts = cloud([3.0, 4.0], [0.0, 0.5])
    assert semidistance(pts, Ball([0, 0], 1.0)) == pytest.approx(4.0)
    assert semidistance(pts, Box([0, 0], [1, 1])) == pytest.approx(math.hypot(2, 3))
    u = RegionUnion((Ball([0, 0], 1.0), Ball([3, 4], 0.1)))
    assert semidistance(pts, u) == 0.0


def test_ball_weighted_radius():
    b = Ball(np.zeros(3), 2.0, SINE_MODE_WEIGHT)
    s = b.sampled(n_random=50, seed=1)
    assert semidistance(s, b) <= 1e-12
    norms = np.sqrt(SINE_MODE_WEIGHT * np.sum(s.points**2, axis=1))
    assert norms.max() == pytest.approx(2.0)


def test_eps_neighborhood():
    B = cloud([0.0])
    assert eps_neighborhood_contains(B, [0.5], 1.0)
    assert not eps_neighborhood_contains(B, [2.0], 1.0)
    with pytest.raises(ValueError):
        eps_neighborhood_contains(B, [0.0], -1.0)


def test_eps_neighborhood_heat_attractor_endpoint():
    # mode k decays as e^{-k^2 t}; a_1 relaxes to -1 when a_1 <= 0
    n = 8
    u0 = np.r_[-0.3, np.linspace(1, 0.1, n - 1)]
    k = np.arange(1, n + 1)
    end = u0 * np.exp(-(k**2) * 10.0)
    end[0] = (u0[0] + 1) * math.exp(-10.0) - 1
    A = SampledSet(np.vstack([np.zeros(n), -np.eye(n)[0]]), metric_weight=SINE_MODE_WEIGHT)
    assert eps_neighborhood_contains(A, end, 1e-3)


# ---------------------------------------------------------------- hypothesis properties

coords = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=25)


@settings(max_examples=80, deadline=None)
@given(coords, coords, coords)
def test_triangle_with_hausdorff(a, b, c):
    A, B, C = (SampledSet(np.array(v)[:, None]) for v in (a, b, c))
    assert semidistance(A, C) <= semidistance(A, B) + hausdorff(B, C) + 1e-9


@settings(max_examples=80, deadline=None)
@given(coords, coords)
def test_subset_semidistance_zero(a, b):
    A = SampledSet(np.array(a)[:, None])
    B = SampledSet(np.array(a + b)[:, None])
    assert semidistance(A, B) == 0.0


def test_proxy_gap_is_tested_with_same_rounding():
    # {-16, 1e-12}, {18}, {36}: the gap 16 + 1e-12 must be feasible
    A = SampledSet(np.array([18.0, 36.0, 1e-12, -16.0])[:, None])
    assert kuratowski_proxy(A, 3) == 1e-12 - (-16.0)


@settings(max_examples=60, deadline=None)
@given(coords, coords, st.integers(1, 5))
@example([18.0, 36.0, 1e-12, -16.0], [1.0], 3)
def test_proxy_monotone_under_inclusion(a, b, k):
    A1 = SampledSet(np.array(a)[:, None])
    A2 = SampledSet(np.array(a + b)[:, None])
    assert kuratowski_proxy(A1, k) <= kuratowski_proxy(A2, k) + 1e-9


@settings(max_examples=60, deadline=None)
@given(coords, coords, st.integers(1, 4), st.integers(1, 4))
def test_proxy_covering_additivity(a, b, k1, k2):
    A = SampledSet(np.array(a)[:, None])
    B = SampledSet(np.array(b)[:, None])
    lhs = kuratowski_proxy(A.union(B), k1 + k2)
    assert lhs <= max(kuratowski_proxy(A, k1), kuratowski_proxy(B, k2)) + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)), min_size=1, max_size=30), st.floats(0.01, 20))
def test_greedy_cover_validity(pts, delta):
    A = SampledSet(np.array(pts))
    cov = greedy_cover(A, delta)
    assert 1 <= cov.ball_count <= len(A)
    d = np.sqrt(((A.points[:, None, :] - np.asarray(cov.centers)[None, :, :]) ** 2).sum(-1)).min(1)
    assert np.all(d <= delta / 2 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)), min_size=1, max_size=20), st.integers(1, 6))
def test_proxy_monotone_in_budget_2d(pts, k):
    A = SampledSet(np.array(pts))
    assert kuratowski_proxy(A, k + 1) <= kuratowski_proxy(A, k) + 1e-12


# ---------------------------------------------------------------- covering


def _interval_cover_count(xs, delta):
    # exact minimum number of closed intervals of length delta covering xs
    xs = sorted(xs)
    count, i = 0, 0
    while i < len(xs):
        start = xs[i]
        count += 1
        while i < len(xs) and xs[i] <= start + delta:
            i += 1
    return count


def test_cover_singleton():
    assert greedy_cover(cloud([4.0, 2.0]), 0.3).ball_count == 1


def test_cover_two_clusters():
    rng = np.random.default_rng(0)
    pts = np.r_[rng.uniform(-0.1, 0.1, 30), rng.uniform(9.9, 10.1, 30)]
    A = SampledSet(pts[:, None])
    assert _interval_cover_count(pts, 1.0) == 2
    assert greedy_cover(A, 1.0).ball_count == 2


def test_cover_uniform_interval():
    A = SampledSet(np.linspace(0, 1, 101)[:, None])
    exact = _interval_cover_count(np.linspace(0, 1, 101), 0.25)
    count = greedy_cover(A, 0.25).ball_count
    assert exact == 4
    assert 4 <= count <= 8
    assert count <= 2 * exact


def test_cover_is_deterministic():
    A = SampledSet(np.random.default_rng(5).normal(size=(40, 3)))
    c1, c2 = greedy_cover(A, 0.7), greedy_cover(A, 0.7)
    assert np.array_equal(np.asarray(c1.centers), np.asarray(c2.centers))


def test_cover_rejects_nonpositive_delta():
    with pytest.raises(ValueError):
        greedy_cover(cloud([0.0]), 0.0)


# ---------------------------------------------------------------- kuratowski proxy


def _brute_proxy_1d(xs, budget):
    # minimal max piece diameter over all splits of the sorted points into <= budget runs
    xs = sorted(set(xs))
    n = len(xs)
    if budget >= n:
        return 0.0
    best = math.inf
    for cuts in itertools.combinations(range(1, n), budget - 1):
        bounds = (0,) + cuts + (n,)
        best = min(best, max(xs[b - 1] - xs[a] for a, b in zip(bounds, bounds[1:])))
    return best


def test_proxy_singleton():
    assert kuratowski_proxy(cloud([3.0]), 1) == 0.0


@pytest.mark.parametrize("K", [10, 11, 25, 200])
def test_proxy_drift_union(K):
    A = SampledSet(np.arange(10, K + 1, dtype=float)[:, None])
    assert kuratowski_proxy(A, 1) == pytest.approx(K - 10, abs=1e-9)


def test_proxy_uniform_samples_budget_4():
    xs = np.linspace(0, 1, 200)
    value = kuratowski_proxy(SampledSet(xs[:, None]), 4)
    assert value == pytest.approx(0.25, abs=0.05)
    # best split is four runs of 50 consecutive grid points
    assert value == pytest.approx(49 / 199, abs=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_proxy_matches_exhaustive_split_oracle(seed):
    xs = np.random.default_rng(seed).uniform(0, 10, 9).tolist()
    for k in (1, 2, 3, 4):
        assert kuratowski_proxy(SampledSet(np.array(xs)[:, None]), k) == pytest.approx(
            _brute_proxy_1d(xs, k), abs=1e-12
        )


def test_diameter_exact():
    pts = np.array([[0, 0], [3, 4], [1, 1], [3, 4]], dtype=float)
    assert diameter(pts) == 5.0
    assert diameter(pts, weight=4.0) == 10.0


# ---------------------------------------------------------------- serialization


def test_csv_roundtrip():
    A = SampledSet(np.array([[0.1, 1e-17], [2 / 3, -5.0]]), label="a")
    B = SampledSet.from_csv(A.to_csv())
    assert np.array_equal(A.points, B.points)
    assert A.to_csv().splitlines()[0] == "x0,x1"


def test_json_roundtrip():
    A = SampledSet(np.array([[0.1, 2.0], [2 / 3, -5.0]]))
    assert np.array_equal(SampledSet.from_json(json.loads(json.dumps(A.to_json()))).points, A.points)


def test_nonautonomous_set_json_and_lookup():
    K = NonautonomousSet((0.0, 1.5), (cloud([0.0]), cloud([1.0], [2.0])))
    back = NonautonomousSet.from_json(K.to_json())
    assert back.times == (0.0, 1.5)
    assert np.array_equal(back.at(1.5).points, [[1.0], [2.0]])
    with pytest.raises(KeyError):
        K.at(0.7)


def test_nonautonomous_set_invariants():
    with pytest.raises(ValueError):
        NonautonomousSet((1.0, 0.0), (cloud([0.0]), cloud([0.0])))
    with pytest.raises(ValueError):
        NonautonomousSet((0.0,), (cloud([0.0]), cloud([0.0])))


def test_sampled_set_invariants():
    with pytest.raises(ValueError):
        SampledSet(np.empty((0, 2)))
    with pytest.raises(ValueError):
        SampledSet(np.array([[np.inf]]))
    A = cloud([1.0, 2.0])
    with pytest.raises(ValueError):
        A.points[0, 0] = 5.0
