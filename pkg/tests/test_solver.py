import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from bcechoice.solver import (LinearProgram, NormConstrainedProgram, Status, solve_lp,
                              solve_norm_constrained)


def test_small_lp_both_backends():
    # max x + y s.t. x + 2y <= 4, 3x + y <= 6
    lp = LinearProgram(np.array([1.0, 1.0]), A_ub=np.array([[1.0, 2.0], [3.0, 1.0]]),
                       b_ub=np.array([4.0, 6.0]), maximize=True)
    for backend in ("highs", "simplex"):
        res = solve_lp(lp, backend)
        assert res.status is Status.OPTIMAL
        assert res.value == pytest.approx(2.8, abs=1e-9)
        np.testing.assert_allclose(res.x, [1.6, 1.2], atol=1e-9)


def test_infeasible_and_unbounded():
    infeasible = LinearProgram(np.zeros(1), A_eq=np.array([[1.0]]), b_eq=np.array([-1.0]))
    unbounded = LinearProgram(np.array([1.0]), maximize=True)
    for backend in ("highs", "simplex"):
        assert solve_lp(infeasible, backend).status is Status.INFEASIBLE
        assert solve_lp(unbounded, backend).status is Status.UNBOUNDED


def test_dimension_checks():
    with pytest.raises(ValueError):
        LinearProgram(np.zeros(2), A_eq=np.ones((1, 3)), b_eq=np.ones(1))
    with pytest.raises(ValueError):
        LinearProgram(np.array([np.nan]))
    lp = LinearProgram(np.zeros(2), nonneg=np.array([False, False]))
    with pytest.raises(ValueError):
        NormConstrainedProgram(LinearProgram(np.zeros(2)), np.array([0]))
    with pytest.raises(ValueError):
        NormConstrainedProgram(lp, np.array([0, 0]))


@given(st.integers(0, 2**32 - 1))
def test_random_feasible_lp_residuals(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(3, 8)), int(rng.integers(1, 4))
    x0 = rng.uniform(0.1, 1.0, n)
    A = sp.csr_matrix(rng.normal(size=(m, n)))
    lp = LinearProgram(rng.uniform(0.0, 1.0, n), A_eq=A, b_eq=A @ x0,
                       A_ub=np.ones((1, n)), b_ub=np.array([x0.sum() + 1.0]))
    values = []
    for backend in ("highs", "simplex"):
        res = solve_lp(lp, backend)
        assert res.optimal
        assert max(lp.residuals(res.x).values()) <= 1e-8
        values.append(res.value)
    assert values[0] == pytest.approx(values[1], abs=1e-7)


def _ball_lp(c):
    k = len(c)
    return NormConstrainedProgram(
        LinearProgram(np.asarray(c, float), nonneg=np.zeros(k, bool), maximize=True),
        np.arange(k))


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=4))
def test_ball_program_matches_norm(c):
    expected = float(np.linalg.norm(c))
    for backend in ("clarabel", "cutting-plane"):
        res = solve_norm_constrained(_ball_lp(c), backend)
        assert res.optimal
        assert res.value == pytest.approx(expected, abs=1e-6)


def test_ball_program_with_linear_cut():
    # max b1 + b2 over the unit disc and b1 <= 0 -> 1 at (0, 1)
    lp = LinearProgram(np.array([1.0, 1.0]), A_ub=np.array([[1.0, 0.0]]), b_ub=np.zeros(1),
                       nonneg=np.zeros(2, bool), maximize=True)
    prog = NormConstrainedProgram(lp, np.arange(2))
    for backend in ("clarabel", "cutting-plane"):
        res = solve_norm_constrained(prog, backend)
        assert res.value == pytest.approx(1.0, abs=1e-6)
        np.testing.assert_allclose(res.x, [0.0, 1.0], atol=1e-4)


def test_unknown_backend():
    with pytest.raises(ValueError):
        solve_norm_constrained(_ball_lp([1.0]), "nope")
    with pytest.raises(ValueError):
        solve_lp(LinearProgram(np.zeros(1)), "nope")
