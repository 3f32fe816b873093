import numpy as np
import pytest
from hypothesis import given, strategies as st

from bcechoice.counterfactual import (CovariateMap, complete_info_counterfactual,
                                      double_problem, double_problem_bound, doubled_joint,
                                      shift_intervals)
from bcechoice.errors import Infeasible
from bcechoice.model import FiniteSupport, complete_info_choice_probs

from conftest import make_problem, random_problem


class FixedFamily:
    """Ignores theta and always returns the same problem."""

    param_names = ("t",)

    def __init__(self, problem):
        self._problem = problem

    def problem(self, theta):
        return self._problem


def two_cell_dominance():
    """``a`` dominates at ``x0``, ``b`` dominates at ``x1``."""
    u = np.zeros((2, 2, 1, 2))
    u[0, 0] = 1.0
    u[1, 1] = 1.0
    return make_problem(u, np.full((2, 1, 2), 0.5), actions=["a", "b"])


def test_covariate_map_validation():
    assert CovariateMap.identity(3).is_identity
    with pytest.raises(ValueError):
        CovariateMap((0, 5))
    cov = FiniteSupport.named(["lo", "hi"])
    cmap = CovariateMap.from_labels(cov, {"lo": "hi"})
    assert cmap[0] == 1 and cmap[1] == 1 and len(cmap) == 2


def test_identity_map_gives_zero_change():
    rng = np.random.default_rng(3)
    problem = random_problem(rng, Y=3, X=2, E=2, V=3)
    emp = complete_info_choice_probs(problem)
    out = shift_intervals(FixedFamily(problem), np.zeros((1, 1)), CovariateMap.identity(2),
                          emp, np.array([0.5, 0.5]))
    np.testing.assert_allclose(out.delta_best, 0.0, atol=1e-9)
    np.testing.assert_allclose(out.delta_worst, 0.0, atol=1e-9)


def test_shift_hand_value():
    # moving x0 to x1 swaps the dominant action at x0 only
    problem = two_cell_dominance()
    emp = np.array([[1.0, 0.0], [0.0, 1.0]])
    out = shift_intervals(FixedFamily(problem), np.zeros((1, 1)), CovariateMap((1, 1)),
                          emp, np.array([0.5, 0.5]))
    np.testing.assert_allclose(out.delta_best[0], [0.5, -0.5], atol=1e-9)
    np.testing.assert_allclose(out.delta_worst[0], [0.5, -0.5], atol=1e-9)


def test_fictional_bounds_on_matching_states():
    # x0: match the state; x1: "a" dominates. Data at x0 is fully informed.
    u = np.zeros((2, 2, 1, 2))
    u[0, 0, 0] = [1.0, 0.0]
    u[1, 0, 0] = [0.0, 1.0]
    u[0, 1] = 1.0
    problem = make_problem(u, np.full((2, 1, 2), 0.5), actions=["a", "b"])
    emp = np.array([[0.5, 0.5], [1.0, 0.0]])
    cmap = CovariateMap((1, 1))
    assert double_problem_bound(problem, cmap, emp, 0, 0, "max") == pytest.approx(1.0, abs=1e-9)
    assert double_problem_bound(problem, cmap, emp, 0, 0, "min") == pytest.approx(1.0, abs=1e-9)


def test_infeasible_data_is_reported():
    problem = two_cell_dominance()
    emp = np.array([[0.0, 1.0], [0.0, 1.0]])
    with pytest.raises(Infeasible):
        double_problem_bound(problem, CovariateMap((1, 1)), emp, 0, 0)
    out = shift_intervals(FixedFamily(problem), np.zeros((2, 1)), CovariateMap((1, 1)),
                          emp, np.array([0.5, 0.5]))
    assert len(out.points) == 0 and len(out.excluded) == 2
    assert np.isnan(out.intervals()["best"]).all()


def test_identity_restricts_to_diagonal():
    problem = two_cell_dominance()
    _, pairs = double_problem(problem, 0, 0)
    np.testing.assert_array_equal(pairs, [[0, 0], [1, 1]])
    _, pairs = double_problem(problem, 0, 1)
    assert len(pairs) == 4


@given(st.integers(0, 2**32 - 1))
def test_doubled_joint_marginals(seed):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng, X=2)
    Y, X, E, V = problem.shape
    emp = complete_info_choice_probs(problem)
    cmap = CovariateMap((1, 0))
    joint, pairs = doubled_joint(problem, cmap, emp, 0)
    eps = problem.eps_pmf[0]
    # prior consistency and the data match on the factual side
    np.testing.assert_allclose(joint.sum(axis=1), problem.prior[0], atol=1e-9)
    factual = np.array([(eps[:, None, None] * joint[:, pairs[:, 0] == y]).sum() for y in range(Y)])
    np.testing.assert_allclose(factual, emp[0], atol=1e-9)
    # both marginals are obedient, each with its own covariate's payoffs
    for side, x in ((0, 0), (1, 1)):
        marg = np.stack([joint[:, pairs[:, side] == y].sum(axis=1) for y in range(Y)], axis=1)
        u = problem.utility[:, x]
        for y in range(Y):
            for z in range(Y):
                gain = (marg[:, y] * (u[y] - u[z])).sum(axis=-1)
                assert np.all(gain >= -1e-9)


@given(st.integers(0, 2**32 - 1))
def test_complete_info_ordering_and_empirical_zero(seed):
    rng = np.random.default_rng(seed)
    problem = random_problem(rng)
    X = problem.shape[1]
    emp = complete_info_choice_probs(problem)
    p_x = np.full(X, 1.0 / X)
    out = complete_info_counterfactual(FixedFamily(problem), np.zeros((1, 1)), emp, p_x)
    assert np.all(out.delta_best <= out.delta_worst + 1e-9)
    # the data came from complete information, so the empirical change is zero
    np.testing.assert_allclose(out.delta_empirical, 0.0, atol=1e-12)
    iv = out.intervals()["empirical"]
    assert np.all((iv[:, 0] <= 0) & (iv[:, 1] >= 0))


def test_single_point_region_has_coincident_endpoints():
    rng = np.random.default_rng(11)
    problem = random_problem(rng, Y=3, X=1)
    emp = complete_info_choice_probs(problem)
    out = complete_info_counterfactual(FixedFamily(problem), np.zeros((1, 1)), emp, np.ones(1))
    for rows in out.intervals().values():
        np.testing.assert_array_equal(rows[:, 0], rows[:, 1])
    assert "complete-information:empirical" in out.to_csv()
    assert out.to_dict()["scenario"] == "complete-information"


def test_simulated_mode_close_to_exact():
    rng = np.random.default_rng(5)
    problem = random_problem(rng, Y=3, X=1, E=2, V=3)
    emp = complete_info_choice_probs(problem)
    fam = FixedFamily(problem)
    exact = complete_info_counterfactual(fam, np.zeros((1, 1)), emp, np.ones(1))
    sim = complete_info_counterfactual(fam, np.zeros((1, 1)), emp, np.ones(1),
                                       mode="simulate", n_draws=50_000, seed=2)
    np.testing.assert_allclose(sim.delta_best, exact.delta_best, atol=0.02)
    with pytest.raises(ValueError):
        complete_info_counterfactual(fam, np.zeros((1, 1)), emp, np.ones(1), mode="guess")
