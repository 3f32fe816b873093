import numpy as np
import pytest

from bcechoice.dgp import NestedLogit
from bcechoice.discretize import GridSpec
from bcechoice.mle import fit_mle, log_likelihood, model_probs

from conftest import OneCostFamily


def small_logit():
    z = np.array([[[-1.0, 0.5]], [[0.5, 0.0]], [[1.0, -0.5]]]).reshape(3, 2, 1)
    return NestedLogit(3, z, np.full(3, 1 / 3), GridSpec.explicit([1.0]), GridSpec.explicit([0.0]))


def test_closed_form_mle_recovers_truth():
    fam = small_logit()
    truth = np.array([0.8, 0.6])
    probs = fam.closed_form_probs(truth) * fam.covariate_pmf[:, None]
    res = fit_mle(fam, probs, likelihood="closed-form", start=np.array([0.5, 0.4]),
                  bounds=[(-3.0, 3.0), (0.05, 0.95)])
    np.testing.assert_allclose(res.theta, truth, atol=1e-3)
    assert res.loglik == pytest.approx(log_likelihood(fam, truth, probs, likelihood="closed-form"))


def test_likelihood_maximised_at_population():
    fam = small_logit()
    truth = np.array([0.8, 0.6])
    probs = fam.closed_form_probs(truth)
    at_truth = log_likelihood(fam, truth, probs, likelihood="closed-form")
    for other in ([0.0, 0.6], [0.8, 0.2], [2.0, 0.9]):
        assert log_likelihood(fam, np.array(other), probs, likelihood="closed-form") < at_truth


def test_bounds_and_invalid_points_score_minus_inf():
    fam = small_logit()
    probs = fam.closed_form_probs([0.8, 0.6])
    assert log_likelihood(fam, np.array([0.8, 1.5]), probs, likelihood="closed-form") == -np.inf
    res = fit_mle(fam, probs, likelihood="closed-form", grid=np.array([[0.0, 0.5], [1.0, 0.5]]),
                  bounds=[(0.0, 1.0), (0.1, 0.9)])
    assert np.all(res.theta >= [0.0, 0.1]) and np.all(res.theta <= [1.0, 0.9])


def test_model_probs_validation():
    with pytest.raises(ValueError):
        model_probs(OneCostFamily(), [1.0], likelihood="closed-form")
    with pytest.raises(ValueError):
        model_probs(small_logit(), [0.8, 0.6], info="partial")
    with pytest.raises(ValueError):
        fit_mle(small_logit(), np.ones((3, 3)))


def test_discretized_complete_info_grid_search():
    # complete information picks a in the first state only; without information
    # a is chosen iff its expected payoff 0.5 * (1 - theta) is positive
    fam = OneCostFamily()
    np.testing.assert_allclose(model_probs(fam, [0.5]), [[0.5, 0.5]])
    np.testing.assert_allclose(model_probs(fam, [0.5], info="degenerate"), [[1.0, 0.0]])
    np.testing.assert_allclose(model_probs(fam, [2.0], info="degenerate"), [[0.0, 1.0]])
    res = fit_mle(fam, np.array([[10.0, 90.0]]), info="degenerate",
                  grid=np.array([[0.5], [2.0], [-1.0]]), polish=False)
    assert res.theta[0] == 2.0 and res.evaluations == 3
