import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bcechoice.bce import predicted_polytope
from bcechoice.dgp import EmpiricalDistribution
from bcechoice.geometry import hull_of_points
from bcechoice.identify import ThetaGrid, identified_set
from bcechoice.inference import (InstrumentFamily, TestResult, bootstrap_counts,
                                 bootstrap_critical_value, confidence_region, maxmin_value,
                                 order_statistic_index, recentered_value)
from bcechoice.inference import test_statistic as statistic
from bcechoice.model import complete_info_choice_probs

from conftest import OneCostFamily, dominance, make_problem, random_problem

CIRCLE = np.column_stack([np.cos(a := np.linspace(0, 2 * np.pi, 20_000, endpoint=False)),
                          np.sin(a)])


def _circle_value(shift, scale, vertices):
    """Brute-force ``max_b [b'shift - scale * h(b)]`` over a dense circle plus b = 0."""
    h = (CIRCLE @ vertices.T).max(axis=1)
    return max(0.0, float((CIRCLE @ shift - scale * h).max()))


@pytest.mark.parametrize("method", ["dual", "hull", "minnorm"])
def test_dominance_value(method):
    assert maxmin_value(dominance(), 0, np.array([0.7]), 1.0, method) == pytest.approx(0.3, abs=1e-7)


def test_dominance_statistic():
    ts = statistic(dominance(), (np.array([[0.7, 0.3]]), 100))
    assert ts == pytest.approx(9.0, abs=1e-5)
    assert statistic(dominance(), (np.array([[1.0, 0.0]]), 100)) == 0.0


@given(st.integers(0, 2**32 - 1))
def test_dual_matches_circle_oracle(seed):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng, Y=3, X=1, E=int(rng.integers(1, 3)), V=3)
    target = rng.dirichlet(np.ones(3))[:2]
    weight = float(rng.uniform(0.2, 1.0))
    verts = predicted_polytope(problem, 0).vertices
    oracle = _circle_value(weight * target, weight, verts)
    dual = maxmin_value(problem, 0, target, weight, "dual")
    hull = maxmin_value(problem, 0, target, weight, "hull")
    assert dual == pytest.approx(oracle, abs=1e-4)
    assert hull == pytest.approx(dual, abs=1e-6)


@given(st.integers(0, 2**32 - 1))
def test_two_action_relabeling_invariance(seed):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng, Y=2)
    X = problem.shape[1]
    joint = rng.dirichlet(np.ones(2 * X)).reshape(X, 2)
    flipped = make_problem(problem.utility[::-1], problem.prior, problem.eps_pmf)
    a = statistic(problem, (joint, 250))
    b = statistic(flipped, (joint[:, ::-1], 250))
    assert a == pytest.approx(b, abs=1e-6)


@given(st.integers(0, 2**32 - 1))
def test_zero_set_survives_relabeling(seed):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng, Y=3, X=1)
    # a mix of model-generated data (TS = 0) and arbitrary data
    joint = (complete_info_choice_probs(problem) if rng.random() < 0.5
             else rng.dirichlet(np.ones(3))[None, :])
    perm = [2, 0, 1]
    moved = make_problem(problem.utility[perm], problem.prior, problem.eps_pmf)
    a = statistic(problem, (joint, 100), method="hull")
    b = statistic(moved, (joint[:, perm], 100), method="hull")
    assert (a <= 1e-8) == (b <= 1e-8)


def test_per_x_values_returned():
    problem = dominance()
    ts, per_x = statistic(problem, (np.array([[0.5, 0.5]]), 10), per_x=True)
    assert ts == pytest.approx(10 * 0.25, abs=1e-6) and per_x.shape == (1,)


@pytest.mark.parametrize("scale", [0.7, 0.0, -0.4])
def test_recentered_value_matches_circle_oracle(scale):
    rng = np.random.default_rng(1)
    poly = hull_of_points(rng.uniform(0, 1, size=(6, 2)))
    shift = rng.normal(size=2) * 0.3
    assert recentered_value(poly, shift, scale) == pytest.approx(
        _circle_value(shift, scale, poly.vertices), abs=1e-6)


def test_order_statistic_index():
    assert order_statistic_index(0.05, 200) == 189
    assert order_statistic_index(0.5, 200) == 99
    assert order_statistic_index(0.5, 1) == 0
    assert order_statistic_index(0.01, 10) == 9
    with pytest.raises(ValueError):
        order_statistic_index(1.0, 10)
    with pytest.raises(ValueError):
        order_statistic_index(0.1, 0)


def test_bootstrap_draws_are_deterministic_and_prefix_stable():
    sample = EmpiricalDistribution(("a", "b"), ("x0", "x1"), np.array([[30, 20], [10, 40]]))
    a = bootstrap_counts(sample, 20, seed=9)
    np.testing.assert_array_equal(a, bootstrap_counts(sample, 20, seed=9))
    np.testing.assert_array_equal(a[:5], bootstrap_counts(sample, 5, seed=9))
    assert not np.array_equal(a, bootstrap_counts(sample, 20, seed=10))
    assert np.all(a.sum(axis=(1, 2)) == sample.n)


def test_degenerate_sample_has_zero_critical_value():
    # every resample of a single occupied cell equals the sample
    sample = EmpiricalDistribution(("a", "b"), ("x0",), np.array([[0, 50]]))
    assert bootstrap_critical_value(dominance(), sample, 30, 0.05, seed=0) == 0.0


@given(st.integers(0, 2**32 - 1))
def test_critical_values_monotone_in_level(seed):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng, Y=2, X=1)
    counts = rng.integers(1, 40, size=(1, 2))
    sample = EmpiricalDistribution(("y0", "y1"), ("x0",), counts)
    _, draws = bootstrap_critical_value(problem, sample, 40, 0.5, seed=3, return_draws=True)
    assert np.all(draws >= 0)
    cvs = [bootstrap_critical_value(problem, sample, 40, a, seed=3) for a in (0.5, 0.1, 0.05)]
    assert cvs == sorted(cvs)


def test_region_with_population_counts_equals_identified_set():
    fam = OneCostFamily()
    grid = ThetaGrid.box(("theta",), [(-1.0, 3.0)], [1 / 3])
    sample = EmpiricalDistribution(("a", "b"), ("x0",), np.array([[800_000, 200_000]]))
    rep = confidence_region(fam, grid, sample, alphas=(0.05, 0.5), n_draws=50, seed=1, workers=1)
    ident = identified_set(fam, grid, sample.conditional)
    np.testing.assert_array_equal(~rep.reject(0.05), ident.feasible_mask)
    np.testing.assert_array_equal(~rep.reject(0.5), ident.feasible_mask)
    assert np.all(rep.ts[ident.feasible_mask] <= 1e-8)
    # larger alpha, smaller region
    assert len(rep.region(0.5)) <= len(rep.region(0.05))
    for res in rep.results(0.05):
        assert math.isnan(res.critical_value) or res.reject == (res.ts > res.critical_value)


def test_region_rejects_by_bootstrap_with_small_sample():
    fam = OneCostFamily()
    grid = ThetaGrid(np.array([[1.0], [2.0], [6.0]]), ("theta",))
    sample = EmpiricalDistribution(("a", "b"), ("x0",), np.array([[80, 20]]))
    rep = confidence_region(fam, grid, sample, alphas=(0.05,), n_draws=100, seed=2, workers=1)
    assert rep.ts[0] == 0.0 and not rep.reject(0.05)[0]
    # theta = 6 allows at most P(a) = 7/12, far below 0.8
    assert rep.reject(0.05)[2]
    assert np.all(np.isfinite(rep.critical_values[1:]))
    again = confidence_region(fam, grid, sample, alphas=(0.05,), n_draws=100, seed=2, workers=1)
    np.testing.assert_array_equal(rep.critical_values, again.critical_values)


def test_test_result_invariant():
    TestResult((1.0,), 2.0, 1.0, True, 10, 0.05)
    TestResult((1.0,), 0.0, math.nan, False, 0, 0.05)
    with pytest.raises(ValueError):
        TestResult((1.0,), 2.0, 1.0, False, 10, 0.05)


def test_instrument_weights():
    np.testing.assert_allclose(InstrumentFamily(4).weights.sum(), 1.0)
