import numpy as np
import pytest
from hypothesis import given, strategies as st

from bcechoice.errors import Infeasible
from bcechoice.identify import (FEASIBLE, INFEASIBLE, ThetaGrid, build_grid_annealing,
                                check_point, halton_cloud, identified_set,
                                identified_set_joint_lp, project)
from bcechoice.journal import Journal

from conftest import OneCostFamily, dominance, instance_a, make_problem


P_OBS = np.array([[0.8, 0.2]])


def test_hand_identified_set():
    fam = OneCostFamily()
    grid = ThetaGrid.box(("theta",), [(-1.0, 3.0)], [1 / 12])
    rep = identified_set(fam, grid, P_OBS)
    feas = rep.feasible_points[:, 0]
    assert feas.min() == pytest.approx(0.0, abs=1e-9)
    assert feas.max() == pytest.approx(5 / 3, abs=1e-9)
    ivs = rep.projections()["theta"]
    assert len(ivs) == 1 and not ivs[0].hi_at_cap


def test_check_point_reports_failing_covariate():
    fam = OneCostFamily()
    assert check_point(fam.problem([1.0]), P_OBS) == (FEASIBLE, None)
    assert check_point(fam.problem([2.0]), P_OBS) == (INFEASIBLE, 0)


def test_journal_resume(tmp_path):
    fam = OneCostFamily()
    grid = ThetaGrid.box(("theta",), [(0.0, 2.0)], [0.5])
    path = tmp_path / "j.jsonl"
    first = identified_set(fam, grid, P_OBS, journal=Journal(path))
    second = identified_set(fam, grid, P_OBS, journal=Journal(path))
    assert second.metadata["resumed"] == len(grid)
    assert first.verdicts == second.verdicts
    # a torn last line is ignored
    with open(path, "a") as fh:
        fh.write('{"key": "trunc')
    assert len(Journal(path).records) == len(grid)


def test_grid_validation():
    with pytest.raises(ValueError):
        ThetaGrid(np.zeros((0, 1)), ("a",))
    with pytest.raises(ValueError):
        ThetaGrid(np.array([[2.0]]), ("a",), bounds=((0.0, 1.0),))
    g = ThetaGrid.box(("a", "b"), [(0, 1), (0, 2)], [0.5, 1.0])
    assert len(g) == 9


def test_projection_detects_gap_and_caps():
    pts = np.arange(0, 11, dtype=float)[:, None]
    feas = np.isin(pts[:, 0], [1, 2, 3, 7, 8, 9, 10])
    ivs = project(pts, feas, 0, (0.0, 10.0))
    assert [(iv.lo, iv.hi) for iv in ivs] == [(1, 3), (7, 10)]
    assert ivs[1].hi_at_cap and not ivs[0].lo_at_bound
    assert project(pts, np.zeros(11, bool), 0, (0.0, 10.0)) == []


def test_projection_tolerates_uneven_halton_spacing():
    pts = np.array([[0.0], [0.13], [0.31], [0.40], [0.58], [0.7]])
    ivs = project(pts, np.ones(6, bool), 0, (0.0, 1.0))
    assert len(ivs) == 1


def test_halton_cloud_inside_bounds():
    pts = halton_cloud(np.array([1.0, 0.5]), np.array([3.0, 3.0]), 500, 120, 3,
                       [(0.0, 4.0), (0.1, 0.9)])
    assert pts.shape == (120, 2)
    assert np.all(pts >= [0.0, 0.1]) and np.all(pts <= [4.0, 0.9])
    again = halton_cloud(np.array([1.0, 0.5]), np.array([3.0, 3.0]), 500, 120, 3,
                         [(0.0, 4.0), (0.1, 0.9)])
    np.testing.assert_array_equal(pts, again)


def test_annealing_concentrates_near_minimiser():
    target = np.array([0.7, -0.4])
    step = 0.1

    def f(p):
        return float(np.sum((p - target) ** 2))

    grid = build_grid_annealing(f, np.array([[-2.0, 2.0], [2.0, -2.0]]), [1.0], 1000, 0,
                                [(-3.0, 3.0), (-3.0, 3.0)], [step, step], ("a", "b"))
    # direct lattice evaluation gives the reference minimiser
    axis = np.round(np.arange(-3.0, 3.0 + 1e-9, step), 10)
    lattice = np.array(np.meshgrid(axis, axis, indexing="ij")).reshape(2, -1).T
    best = lattice[np.argmin([f(p) for p in lattice])]
    # densest region of the visited cloud: most neighbours within one step
    pts = grid.points
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    densest = pts[np.argmax((d2 <= step ** 2).sum(axis=1))]
    assert np.all(np.abs(densest - best) <= step + 1e-9)


def test_joint_lp_dominance_full_simplex():
    region = identified_set_joint_lp(dominance(), np.array([[1.0, 0.0]]))
    np.testing.assert_allclose(region.lower, 0.0, atol=1e-9)
    np.testing.assert_allclose(region.upper, 1.0, atol=1e-9)


@given(st.floats(0.0, 1.0).filter(lambda p: abs(p - 0.5) > 1e-7))
def test_joint_lp_instance_a_always_a(p1):
    region = identified_set_joint_lp(instance_a(), np.array([[1.0, 0.0]]), eps_fixed=True)
    assert region.contains(np.array([[[p1, 1.0 - p1]]])) == (p1 > 0.5)


def test_joint_lp_infeasible_data():
    # with a strictly dominant action no prior makes b likely
    u = np.zeros((2, 1, 1, 2))
    u[0] = 1.0
    with pytest.raises(Infeasible):
        identified_set_joint_lp(make_problem(u, np.full((1, 1, 2), 0.5)), np.array([[0.2, 0.8]]))
