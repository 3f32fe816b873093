import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from bcechoice.errors import DimensionMismatch, InvalidPmf, ZeroMassSignal
from bcechoice.model import (BaselineProblem, FiniteSupport, InformationStructure, TieRule,
                             argmax_pmf, choice_probabilities, complete_info_choice_probs,
                             complete_information, consideration_set,
                             degenerate_info_choice_probs, degenerate_information,
                             induced_joint, optimal_strategy, optimality_gap, posterior)

from conftest import instance_a, make_problem, random_problem


def test_support_rejects_duplicate_labels():
    with pytest.raises(ValueError):
        FiniteSupport(("a", "a"))
    with pytest.raises(ValueError):
        FiniteSupport(())


def test_support_values_must_match_labels():
    with pytest.raises(DimensionMismatch):
        FiniteSupport(("a", "b"), np.zeros(3))


def test_problem_rejects_bad_prior():
    u = np.zeros((2, 1, 1, 2))
    with pytest.raises(InvalidPmf):
        make_problem(u, np.array([[[0.6, 0.6]]]))
    with pytest.raises(DimensionMismatch):
        make_problem(u, np.array([[[0.5, 0.25, 0.25]]]))


def test_problem_rejects_nonfinite_utility():
    u = np.zeros((2, 1, 1, 2))
    u[0, 0, 0, 0] = np.inf
    with pytest.raises(ValueError):
        make_problem(u, np.full((1, 1, 2), 0.5))


def test_posterior_hand_value():
    p = make_problem(np.zeros((2, 1, 1, 2)), np.full((1, 1, 2), 0.5))
    info = InformationStructure(FiniteSupport(("t", "s")),
                                np.array([[[[0.8, 0.2], [0.4, 0.6]]]]))
    np.testing.assert_allclose(posterior(p, info, 0, 0, 0), [2 / 3, 1 / 3], atol=1e-12)


def test_posterior_zero_mass_signal():
    p = make_problem(np.zeros((2, 1, 1, 2)), np.full((1, 1, 2), 0.5))
    info = InformationStructure(FiniteSupport(("t", "s")),
                                np.array([[[[1.0, 0.0], [1.0, 0.0]]]]))
    with pytest.raises(ZeroMassSignal):
        posterior(p, info, 0, 0, 1)


def test_instance_a_complete_information():
    p = instance_a()
    info = complete_information(p)
    strat = optimal_strategy(p, info)
    np.testing.assert_allclose(strat.action_pmf[0, 0], [[1, 0], [0, 1]])
    joint = induced_joint(p, info, strat).joint[0, 0]
    np.testing.assert_allclose(joint, [[0.5, 0.0], [0.0, 0.5]])
    np.testing.assert_allclose(choice_probabilities(p, info)[0], [0.5, 0.5])
    assert consideration_set(p, info, strat, 0, 0) == [0, 1]


def test_instance_a_degenerate_uniform_tie():
    p = instance_a()
    info = degenerate_information(p)
    np.testing.assert_allclose(choice_probabilities(p, info)[0], [0.5, 0.5])
    first = choice_probabilities(p, info, TieRule.FIRST_INDEX)[0]
    np.testing.assert_allclose(first, [1.0, 0.0])


def test_shortcuts_match_general_route():
    rng = np.random.default_rng(3)
    for _ in range(20):
        p = random_problem(rng)
        np.testing.assert_allclose(complete_info_choice_probs(p),
                                   choice_probabilities(p, complete_information(p)), atol=1e-12)
        np.testing.assert_allclose(degenerate_info_choice_probs(p),
                                   choice_probabilities(p, degenerate_information(p)), atol=1e-12)


def test_argmax_tie_slack_is_relative():
    vals = np.array([1e6, 1e6 * (1 + 1e-12), 0.0])
    np.testing.assert_allclose(argmax_pmf(vals), [0.5, 0.5, 0.0])


def test_problem_json_round_trip():
    p = random_problem(np.random.default_rng(0))
    q = BaselineProblem.from_json(p.to_json())
    assert q == p or (np.array_equal(q.utility, p.utility) and np.array_equal(q.prior, p.prior))
    json.loads(p.to_json())


def test_information_json_round_trip():
    p = instance_a()
    info = complete_information(p)
    back = InformationStructure.from_json(info.to_json())
    np.testing.assert_array_equal(back.signal_pmf, info.signal_pmf)


@given(st.integers(0, 2**32 - 1))
def test_optimal_strategy_is_optimal(seed):
    rng = np.random.default_rng(seed)
    p = random_problem(rng)
    T = int(rng.integers(1, 4))
    _, X, E, V = p.shape
    info = InformationStructure(FiniteSupport.named(range(T)),
                                rng.dirichlet(np.ones(T), size=(X, E, V)))
    strat = optimal_strategy(p, info)
    assert optimality_gap(p, info, strat) <= 1e-12
    joint = induced_joint(p, info, strat).joint
    # joint marginalises to the prior and each (x, e) block sums to one
    np.testing.assert_allclose(joint.sum(axis=2), p.prior, atol=1e-12)
    np.testing.assert_allclose(joint.sum(axis=(2, 3)), 1.0, atol=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_choice_probs_are_pmfs(seed):
    p = random_problem(np.random.default_rng(seed))
    for probs in (complete_info_choice_probs(p), degenerate_info_choice_probs(p)):
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
