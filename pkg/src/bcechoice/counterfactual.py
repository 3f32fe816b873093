"""Counterfactual choice-probability bounds.

Two experiments are supported.

Covariate shift with information held fixed: every covariate value ``x``
is paired with a transformed value ``x_hat``. The DM chooses a pair
``(y, y_hat)`` in a doubled problem whose payoff is
``u(y, x) + u(y_hat, x_hat)``; the factual coordinate must match the data
and the fictional coordinate's marginal is bounded by LP.

Complete information: the fictional probabilities are those of fully
informed DMs, compared with the best and worst factual probabilities over
BCEs and with the empirical ones.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from .bce import assemble_constraints, extremal_choice_prob
from .errors import Infeasible, SolverFailure
from .model import BaselineProblem, FiniteSupport, TieRule, complete_info_choice_probs
from .parallel import parallel_map
from .solver import LinearProgram, Status, solve_lp
from .tolerances import DEFAULT, Tolerances


@dataclass(frozen=True)
class CovariateMap:
    """Total map ``x -> x_hat`` over covariate indices."""

    targets: tuple

    def __post_init__(self):
        t = tuple(int(v) for v in self.targets)
        n = len(t)
        if any(v < 0 or v >= n for v in t):
            raise ValueError("covariate map must send every index into the covariate set")
        object.__setattr__(self, "targets", t)

    @classmethod
    def identity(cls, n_covariates: int) -> "CovariateMap":
        return cls(tuple(range(n_covariates)))

    @classmethod
    def from_labels(cls, covariates: FiniteSupport, pairs: dict) -> "CovariateMap":
        """Build from ``{x_label: x_hat_label}``; unlisted values map to themselves."""
        t = list(range(len(covariates)))
        for a, b in pairs.items():
            t[covariates.index(a)] = covariates.index(b)
        return cls(tuple(t))

    def __getitem__(self, x: int) -> int:
        return self.targets[x]

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def is_identity(self) -> bool:
        return all(x == t for x, t in enumerate(self.targets))


# ---------------------------------------------------------------------------
# Doubled problem


def double_problem(problem: BaselineProblem, x: int, x_hat: int) -> tuple[BaselineProblem, NDArray]:
    """Single-covariate doubled problem and its ``(factual, fictional)`` action index pairs.

    When ``x_hat == x`` only the diagonal pairs ``(y, y)`` are kept: with the
    same covariate and the same information the DM makes the same choice.
    """
    Y = problem.shape[0]
    if x_hat == x:
        pairs = np.array([(y, y) for y in range(Y)])
    else:
        pairs = np.array(list(itertools.product(range(Y), range(Y))))
    labels = [f"{problem.actions.labels[a]}|{problem.actions.labels[b]}" for a, b in pairs]
    u = problem.utility[pairs[:, 0], x] + problem.utility[pairs[:, 1], x_hat]   # [pair, e, v]
    cx = problem.covariates.labels
    doubled = BaselineProblem(
        FiniteSupport.named(labels),
        FiniteSupport.named([f"{cx[x]}->{cx[x_hat]}"]),
        problem.eps_support, problem.state_support,
        u[:, None], problem.prior[x:x + 1], problem.eps_pmf[x:x + 1], problem.tol)
    return doubled, pairs


def double_problem_bound(problem: BaselineProblem, cmap: CovariateMap, empirical: NDArray,
                         target: int, x: int, sense: str = "max", backend: str = "highs",
                         tol: Tolerances = DEFAULT) -> float:
    """Largest or smallest fictional ``P(target | x_hat)`` with information held fixed.

    ``empirical`` is ``P0(y | x)`` indexed ``[x, y]``. The factual marginal of
    the doubled BCE must equal ``empirical[x]``. Raises :class:`Infeasible`
    when no doubled BCE matches the data.
    """
    if sense not in ("max", "min"):
        raise ValueError("sense must be 'max' or 'min'")
    Y = problem.shape[0]
    doubled, pairs = double_problem(problem, x, cmap[x])
    _, _, E, V = doubled.shape
    K = len(pairs)
    system = assemble_constraints(doubled, None, xs=[0])
    eps = doubled.eps_pmf[0]
    e_idx, k_idx, v_idx = np.meshgrid(np.arange(E), np.arange(K), np.arange(V), indexing="ij")
    cols = np.arange(system.n_vars)
    weight = eps[e_idx.ravel()]
    data = sp.csr_matrix((weight, (pairs[k_idx.ravel(), 0], cols)), shape=(Y, system.n_vars))
    A_eq = sp.vstack([system.A_eq, data]).tocsr()
    b_eq = np.r_[system.B_eq, np.asarray(empirical, float)[x]]
    c = np.where(pairs[k_idx.ravel(), 1] == target, weight, 0.0)
    lp = LinearProgram(c, A_eq, b_eq, system.scaled_ineq(), None, maximize=(sense == "max"))
    res = solve_lp(lp, backend, tol)
    if res.status is Status.INFEASIBLE:
        raise Infeasible(f"no doubled BCE matches the data at x={x}")
    if not res.optimal:
        raise SolverFailure("doubled-problem LP failed", res.diagnostic)
    return float(res.value)


def doubled_joint(problem: BaselineProblem, cmap: CovariateMap, empirical: NDArray,
                  x: int, backend: str = "highs", tol: Tolerances = DEFAULT):
    """A feasible doubled BCE at ``x`` as ``(joint[e, pair, v], pairs)``; used for checks."""
    doubled, pairs = double_problem(problem, x, cmap[x])
    Y = problem.shape[0]
    _, _, E, V = doubled.shape
    system = assemble_constraints(doubled, None, xs=[0])
    eps = doubled.eps_pmf[0]
    e_idx, k_idx, _ = np.meshgrid(np.arange(E), np.arange(len(pairs)), np.arange(V), indexing="ij")
    data = sp.csr_matrix((eps[e_idx.ravel()], (pairs[k_idx.ravel(), 0], np.arange(system.n_vars))),
                         shape=(Y, system.n_vars))
    lp = LinearProgram(np.zeros(system.n_vars), sp.vstack([system.A_eq, data]).tocsr(),
                       np.r_[system.B_eq, np.asarray(empirical, float)[x]],
                       system.scaled_ineq(), None)
    res = solve_lp(lp, backend, tol)
    if not res.optimal:
        raise Infeasible(f"no doubled BCE matches the data at x={x}")
    return res.x.reshape(E, len(pairs), V), pairs


# ---------------------------------------------------------------------------
# Interval reports


@dataclass
class CounterfactualIntervals:
    """Per-point changes and their ranges over the supplied parameter region.

    ``delta_best[i, y]`` and ``delta_worst[i, y]`` are the changes computed
    from the best-case (largest) and worst-case (smallest) probabilities at
    the ``i``-th kept point; ``delta_empirical`` (complete-information
    experiment only) compares with the empirical probabilities.
    """

    actions: tuple
    names: tuple
    points: NDArray
    delta_best: NDArray
    delta_worst: NDArray
    delta_empirical: NDArray | None = None
    excluded: list = field(default_factory=list)
    scenario: str = "shift"

    def _range(self, values: NDArray) -> NDArray:
        if len(values) == 0:
            return np.full((len(self.actions), 2), np.nan)
        return np.column_stack([values.min(axis=0), values.max(axis=0)])

    def intervals(self) -> dict:
        """``{"best": [Y, 2], "worst": [Y, 2], ("empirical": [Y, 2])}``, rows ``[lower, upper]``."""
        out = {"best": self._range(self.delta_best), "worst": self._range(self.delta_worst)}
        if self.delta_empirical is not None:
            out["empirical"] = self._range(self.delta_empirical)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["action", "lower", "upper", "scenario"])
        for tag, rows in self.intervals().items():
            for a, (lo, hi) in zip(self.actions, rows):
                w.writerow([a, f"{lo:.10g}", f"{hi:.10g}", f"{self.scenario}:{tag}"])
        return buf.getvalue()

    def per_point_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = list(self.names) + ["action", "delta_best", "delta_worst"]
        if self.delta_empirical is not None:
            head.append("delta_empirical")
        w.writerow(head)
        for i, p in enumerate(self.points):
            for y, a in enumerate(self.actions):
                row = [f"{v:.12g}" for v in p] + [a, f"{self.delta_best[i, y]:.12g}",
                                                  f"{self.delta_worst[i, y]:.12g}"]
                if self.delta_empirical is not None:
                    row.append(f"{self.delta_empirical[i, y]:.12g}")
                w.writerow(row)
        return buf.getvalue()

    def to_dict(self) -> dict:
        iv = {k: v.tolist() for k, v in self.intervals().items()}
        return {"scenario": self.scenario, "actions": list(self.actions),
                "names": list(self.names), "points": self.points.tolist(),
                "delta_best": self.delta_best.tolist(), "delta_worst": self.delta_worst.tolist(),
                "delta_empirical": None if self.delta_empirical is None
                else self.delta_empirical.tolist(),
                "intervals": iv, "excluded": self.excluded}


def _collect(results, points, names, actions, scenario) -> CounterfactualIntervals:
    kept, best, worst, emp, excluded = [], [], [], [], []
    for p, res in zip(points, results):
        if "error" in res:
            excluded.append({"theta": list(map(float, p)), "reason": res["error"]})
            continue
        kept.append(p)
        best.append(res["best"])
        worst.append(res["worst"])
        if "empirical" in res:
            emp.append(res["empirical"])
    Y = len(actions)
    shape = (len(kept), Y)
    return CounterfactualIntervals(
        tuple(actions), tuple(names), np.asarray(kept, float).reshape(len(kept), points.shape[1]),
        np.asarray(best, float).reshape(shape), np.asarray(worst, float).reshape(shape),
        np.asarray(emp, float).reshape(shape) if emp else None, excluded, scenario)


def _shift_task(args):
    family, theta, cmap, empirical, p_x, targets, backend, tol = args
    try:
        problem = family.problem(theta)
        Y = problem.shape[0]
        best, worst = np.zeros(Y), np.zeros(Y)
        for x in np.flatnonzero(p_x > 0):
            for y in targets:
                fact_hi = extremal_choice_prob(problem, y, x, "max", empirical, backend, tol)
                fact_lo = extremal_choice_prob(problem, y, x, "min", empirical, backend, tol)
                fict_hi = double_problem_bound(problem, cmap, empirical, y, x, "max", backend, tol)
                fict_lo = double_problem_bound(problem, cmap, empirical, y, x, "min", backend, tol)
                best[y] += p_x[x] * (fact_hi - fict_hi)
                worst[y] += p_x[x] * (fact_lo - fict_lo)
        return {"best": best, "worst": worst}
    except (Infeasible, SolverFailure, ValueError) as err:
        return {"error": f"{type(err).__name__}: {err}"}


def shift_intervals(family, points: NDArray, cmap: CovariateMap, empirical: NDArray,
                    p_x: NDArray, targets: Sequence[int] | None = None,
                    names: Sequence[str] | None = None, backend: str = "highs",
                    tol: Tolerances = DEFAULT, workers: int | None = None) -> CounterfactualIntervals:
    """Changes ``factual - fictional`` in best- and worst-case probabilities over ``points``.

    The factual bounds are the extreme BCE probabilities that also match
    ``empirical`` (so they equal the data when it is matched exactly). Points
    where some LP is infeasible are excluded and listed in ``excluded``.
    Actions outside ``targets`` report zero.
    """
    points = np.atleast_2d(np.asarray(points, float))
    if len(points) == 0:
        raise ValueError("the parameter region is empty")
    empirical = np.asarray(empirical, float)
    p_x = np.asarray(p_x, float)
    Y = empirical.shape[1]
    targets = list(range(Y)) if targets is None else list(targets)
    jobs = [(family, p, cmap, empirical, p_x, targets, backend, tol) for p in points]
    results = parallel_map(_shift_task, jobs, workers)
    actions = family.problem(points[0]).actions.labels
    names = names or getattr(family, "param_names", tuple(f"theta{i}" for i in range(points.shape[1])))
    return _collect(results, points, names, actions, "shift")


def _simulated_complete(problem: BaselineProblem, n_draws: int, seed: int) -> NDArray:
    """Monte Carlo complete-information probabilities on the discretised model."""
    rng = np.random.default_rng(seed)
    Y, X, E, V = problem.shape
    out = np.zeros((X, Y))
    for x in range(X):
        cell = (problem.eps_pmf[x][:, None] * problem.prior[x]).ravel()
        draws = rng.choice(E * V, size=n_draws, p=cell / cell.sum())
        u = problem.utility[:, x].reshape(Y, E * V)[:, draws]
        top = u.max(axis=0)
        ties = np.abs(u - top) <= problem.tol.argmax_rel * np.maximum(1.0, np.abs(top))
        out[x] = (ties / ties.sum(axis=0)).sum(axis=1) / n_draws
    return out


def _complete_task(args):
    family, theta, empirical, p_x, mode, n_draws, seed, backend, tol = args
    try:
        problem = family.problem(theta)
        Y = problem.shape[0]
        if mode == "exact":
            com = complete_info_choice_probs(problem, TieRule.UNIFORM)
        else:
            com = _simulated_complete(problem, n_draws, seed)
        best, worst, emp = np.zeros(Y), np.zeros(Y), np.zeros(Y)
        for x in np.flatnonzero(p_x > 0):
            for y in range(Y):
                hi = extremal_choice_prob(problem, y, x, "max", None, backend, tol)
                lo = extremal_choice_prob(problem, y, x, "min", None, backend, tol)
                best[y] += p_x[x] * (com[x, y] - hi)
                worst[y] += p_x[x] * (com[x, y] - lo)
                emp[y] += p_x[x] * (com[x, y] - empirical[x, y])
        return {"best": best, "worst": worst, "empirical": emp}
    except (Infeasible, SolverFailure, ValueError) as err:
        return {"error": f"{type(err).__name__}: {err}"}


def complete_info_counterfactual(family, points: NDArray, empirical: NDArray, p_x: NDArray,
                                 mode: str = "exact", n_draws: int = 100_000, seed: int = 0,
                                 names: Sequence[str] | None = None, backend: str = "highs",
                                 tol: Tolerances = DEFAULT,
                                 workers: int | None = None) -> CounterfactualIntervals:
    """Changes ``complete-information - factual`` over ``points``.

    ``delta_best`` uses the largest factual BCE probability, ``delta_worst``
    the smallest and ``delta_empirical`` the data, all weighted by ``p_x``.
    ``mode="exact"`` sums argmax indicators over the discretised taste grid
    (uniform tie split); ``mode="simulate"`` draws ``n_draws`` tastes per
    covariate value instead.
    """
    if mode not in ("exact", "simulate"):
        raise ValueError("mode must be 'exact' or 'simulate'")
    points = np.atleast_2d(np.asarray(points, float))
    if len(points) == 0:
        raise ValueError("the parameter region is empty")
    empirical = np.asarray(empirical, float)
    p_x = np.asarray(p_x, float)
    jobs = [(family, p, empirical, p_x, mode, n_draws, seed, backend, tol) for p in points]
    results = parallel_map(_complete_task, jobs, workers)
    actions = family.problem(points[0]).actions.labels
    names = names or getattr(family, "param_names", tuple(f"theta{i}" for i in range(points.shape[1])))
    return _collect(results, points, names, actions, "complete-information")

