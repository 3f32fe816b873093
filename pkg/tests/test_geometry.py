import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

from bcechoice.geometry import (distance_to_hull, distance_via_oracle, finite_oracle,
                                hull_of_points, minkowski_sum, polytope_from_oracle)


def _qp_distance(target, pts):
    """Reference distance by SLSQP over simplex weights."""
    k = len(pts)
    res = minimize(lambda w: np.sum((w @ pts - target) ** 2), np.full(k, 1.0 / k),
                   bounds=[(0, 1)] * k, constraints={"type": "eq", "fun": lambda w: w.sum() - 1},
                   method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    return float(np.sqrt(max(res.fun, 0.0)))


def test_distance_to_square():
    sq = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], float)
    assert distance_to_hull(np.array([2.0, 0.5]), sq) == pytest.approx(1.0, abs=1e-12)
    assert distance_to_hull(np.array([2.0, 2.0]), sq) == pytest.approx(np.sqrt(2), abs=1e-12)
    assert distance_to_hull(np.array([0.5, 0.5]), sq) == pytest.approx(0.0, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_distance_matches_qp(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    pts = rng.normal(size=(int(rng.integers(1, 8)), d))
    target = rng.normal(size=d) * 2
    assert distance_to_hull(target, pts) == pytest.approx(_qp_distance(target, pts), abs=1e-5)


@given(st.integers(0, 2**32 - 1))
def test_oracle_distance_matches_vertex_distance(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(6, 3))
    target = rng.normal(size=3) * 2
    res = distance_via_oracle(target, finite_oracle(pts))
    assert res.norm == pytest.approx(distance_to_hull(target, pts), abs=1e-8)


@given(st.integers(0, 2**32 - 1))
def test_polytope_recovery_exact(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    pts = rng.normal(size=(int(rng.integers(d + 1, 10)), d))
    poly = polytope_from_oracle(finite_oracle(pts), d)
    ref = hull_of_points(pts)
    assert sorted(map(tuple, np.round(poly.vertices, 9))) == \
        sorted(map(tuple, np.round(ref.vertices, 9)))


def test_lower_dimensional_polytope():
    # a segment in the plane, then a single point
    seg = np.array([[0.0, 0.0], [1.0, 1.0], [0.5, 0.5]])
    poly = polytope_from_oracle(finite_oracle(seg), 2)
    assert poly.dimension == 1
    assert len(poly.vertices) == 2
    assert poly.distance(np.array([1.0, 0.0])) == pytest.approx(np.sqrt(0.5))
    pt = hull_of_points(np.array([[0.3, 0.2], [0.3, 0.2]]))
    assert pt.dimension == 0


def test_farthest_vertex():
    poly = hull_of_points(np.array([[0, 0], [1, 0], [0, 1]], float))
    assert poly.farthest(np.zeros(2), -1.0) == pytest.approx(1.0)
    assert poly.farthest(np.array([1.0, 0.0]), 2.0) == pytest.approx(np.sqrt(5))


@given(st.integers(0, 2**32 - 1))
def test_minkowski_support_is_additive(seed):
    rng = np.random.default_rng(seed)
    A = hull_of_points(rng.normal(size=(5, 2)))
    B = hull_of_points(rng.normal(size=(4, 2)))
    w = rng.uniform(0.1, 1.0, 2)
    S = minkowski_sum([A, B], w)
    for _ in range(5):
        d = rng.normal(size=2)
        expected = w[0] * (A.vertices @ d).max() + w[1] * (B.vertices @ d).max()
        assert (S.vertices @ d).max() == pytest.approx(expected, abs=1e-10)
