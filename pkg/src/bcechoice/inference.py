"""Moment-inequality test and confidence regions for the BCE model.

For each covariate value ``x`` the moment is ``P_X(x) b'(P0~ - P~)`` where
``P~`` ranges over the predicted choice probabilities (first ``|Y|-1``
coordinates) and ``b`` over the unit ball. The max-min of that moment is
the distance from the scaled data point to the scaled predicted set; the
statistic averages ``n * distance**2`` over ``x``.

Three routes compute the max-min value:

``"dual"``
    one linear program with a norm-ball constraint, obtained by dualising
    the inner minimisation over BCEs (solved by clarabel);
``"hull"``
    exact distance to the vertex list of the predicted set;
``"minnorm"``
    Wolfe's minimum-norm-point method driven by the BCE support oracle.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from .bce import PredictedSetOracle, assemble_constraints, is_feasible, predicted_polytope
from .dgp import EmpiricalDistribution
from .errors import Infeasible, SolverFailure
from .geometry import Polytope, distance_via_oracle
from .journal import Journal, theta_key
from .model import BaselineProblem
from .parallel import parallel_map
from .solver import (LinearProgram, NormConstrainedProgram, Status,
                     solve_norm_constrained)
from .tolerances import DEFAULT, Tolerances

METHODS = ("dual", "hull", "minnorm")


@dataclass(frozen=True)
class InstrumentFamily:
    """Indicators ``1{X = x}`` with the uniform weighting measure over covariates."""

    n_covariates: int

    @property
    def weights(self) -> NDArray:
        return np.full(self.n_covariates, 1.0 / self.n_covariates)


# ---------------------------------------------------------------------------
# Max-min value at one covariate value


def dual_program(problem: BaselineProblem, x: int, shift: NDArray, scale: float,
                 tol: Tolerances = DEFAULT) -> NormConstrainedProgram:
    """Ball-constrained LP equal to ``max_b min_q b'(shift - scale * q)`` for ``scale >= 0``.

    ``q`` ranges over the first ``|Y|-1`` predicted choice probabilities at
    ``x``. Variables are ``(b, mu, nu)``: ``b`` in the unit ball, ``mu`` free
    multipliers of the consistency rows, ``nu >= 0`` multipliers of the
    obedience rows. Each BCE column ``(e, y, v)`` contributes the dual row
    ``mu[e, v] - (G' nu)[e, y, v] + scale * eps[e] * b[y] <= 0``.
    """
    if scale < 0:
        raise ValueError("the dual form needs a nonnegative scale")
    Y, _, E, V = problem.shape
    k = Y - 1
    system = assemble_constraints(problem, None, xs=[x])
    G = system.scaled_ineq()
    n_cols = system.n_vars
    n_mu, n_nu = system.n_consistency, G.shape[0]
    # column (e, y, v) -> b[y] coefficient scale * eps[e], for y < Y-1
    e_idx, y_idx, v_idx = np.meshgrid(np.arange(E), np.arange(Y), np.arange(V), indexing="ij")
    rows = np.arange(n_cols)
    sel = (y_idx.ravel() < k)
    B = sp.csr_matrix((scale * problem.eps_pmf[x][e_idx.ravel()[sel]],
                       (rows[sel], y_idx.ravel()[sel])), shape=(n_cols, k))
    A_ub = sp.hstack([B, system.A_eq.T, -G.T]).tocsr()
    c = np.r_[np.asarray(shift, float), system.B_eq, np.zeros(n_nu)]
    nonneg = np.r_[np.zeros(k + n_mu, dtype=bool), np.ones(n_nu, dtype=bool)]
    lp = LinearProgram(c, None, None, A_ub, np.zeros(n_cols), nonneg, maximize=True)
    return NormConstrainedProgram(lp, np.arange(k))


def maxmin_value(problem: BaselineProblem, x: int, target: NDArray, weight: float = 1.0,
                 method: str = "dual", backend: str = "highs",
                 polytope: Polytope | None = None, tol: Tolerances = DEFAULT) -> float:
    """``max_{|b|<=1} min_q weight * b'(target - q)`` at covariate index ``x``.

    ``target`` is the empirical pmf restricted to the first ``|Y|-1``
    actions and ``weight`` is ``P_X(x)``. Raises :class:`Infeasible` when the
    model predicts nothing at ``x``.
    """
    target = np.asarray(target, float)
    if weight == 0.0:
        return 0.0
    if method == "dual":
        prog = dual_program(problem, x, weight * target, weight, tol)
        res = solve_norm_constrained(prog, "clarabel", tol)
        if res.status is Status.UNBOUNDED:
            raise Infeasible(f"no BCE at x={x}")
        if not res.optimal:
            # clarabel stalls on some degenerate instances; the cutting-plane
            # route solves the same program with the LP backend
            res = solve_norm_constrained(prog, "cutting-plane", tol)
        if res.status is Status.UNBOUNDED:
            raise Infeasible(f"no BCE at x={x}")
        if not res.optimal:
            raise SolverFailure("max-min program failed", res.diagnostic)
        return max(0.0, float(res.value))
    if method == "hull":
        poly = polytope if polytope is not None else predicted_polytope(problem, x, None, backend, tol)
        return weight * poly.distance(target)
    if method == "minnorm":
        oracle = PredictedSetOracle(problem, x, None, backend, tol)
        Y = problem.shape[0]
        res = distance_via_oracle(target, lambda d: oracle.support(np.r_[d, 0.0])[1][:Y - 1])
        return weight * res.norm
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")


def recentered_value(polytope: Polytope, shift: NDArray, scale: float) -> float:
    """``max_{|b|<=1} [b'shift - scale * h(b)]`` with ``h`` the support function.

    This is the bootstrap moment difference. For ``scale > 0`` it is
    ``scale * dist(shift / scale, Q)``; for ``scale < 0`` the support term
    enters with a plus sign and the value is the largest distance
    ``max_q |shift - scale * q|``, attained at a vertex.
    """
    shift = np.asarray(shift, float)
    if scale > 0.0:
        return scale * polytope.distance(shift / scale)
    if scale == 0.0:
        return float(np.linalg.norm(shift))
    return polytope.farthest(shift, scale)


# ---------------------------------------------------------------------------
# Predicted sets, cached per parameter value


class PredictedSets:
    """Lazily built vertex lists of the predicted sets of one problem, one per ``x``.

    An empty predicted set is cached as ``None``.
    """

    def __init__(self, problem: BaselineProblem, backend: str = "highs",
                 tol: Tolerances = DEFAULT):
        self.problem = problem
        self.backend = backend
        self.tol = tol
        self._cache: dict = {}

    def __getitem__(self, x: int) -> Polytope | None:
        if x not in self._cache:
            try:
                self._cache[x] = predicted_polytope(self.problem, x, None, self.backend, self.tol)
            except Infeasible:
                self._cache[x] = None
        return self._cache[x]

    def build(self, xs: Sequence[int] | None = None) -> "PredictedSets":
        for x in range(self.problem.shape[1]) if xs is None else xs:
            self[x]
        return self


def _coerce(problem: BaselineProblem, sample) -> tuple[NDArray, int]:
    """(joint ``[x, y]`` pmf, sample size) from a sample or a ``(joint, n)`` pair."""
    if isinstance(sample, EmpiricalDistribution):
        joint, n = sample.joint, sample.n
    else:
        joint, n = sample
        joint = np.asarray(joint, float)
    if n < 1:
        raise ValueError("sample size must be at least 1")
    Y, X = problem.shape[0], problem.shape[1]
    if joint.shape != (X, Y):
        raise ValueError(f"sample is indexed {joint.shape}, expected ({X}, {Y})")
    return joint, int(n)


def test_statistic(problem: BaselineProblem, sample, method: str = "dual",
                   backend: str = "highs", sets: PredictedSets | None = None,
                   tol: Tolerances = DEFAULT, per_x: bool = False):
    """``(1/|X|) sum_x n * value_x**2``; ``+inf`` if any predicted set is empty.

    ``sample`` is an :class:`EmpiricalDistribution` or a ``(joint, n)`` pair
    with ``joint`` indexed ``[x, y]`` (useful for population probabilities).
    Covariate values where the data already fit (checked by the phase-one
    LP) contribute exactly zero. With ``per_x`` the per-x values come too.
    """
    joint, n = _coerce(problem, sample)
    Y, X = problem.shape[0], problem.shape[1]
    p_x = joint.sum(axis=1)
    values = np.zeros(X)
    conditional = np.divide(joint, p_x[:, None], out=np.zeros_like(joint), where=p_x[:, None] > 0)
    for x in range(X):
        if p_x[x] <= 0.0:
            continue
        cond = conditional[x]
        if method == "hull":
            poly = (sets or PredictedSets(problem, backend, tol))[x]
            if poly is None:
                values[x] = np.inf
                continue
            values[x] = p_x[x] * poly.distance(cond[:Y - 1])
            continue
        if is_feasible(assemble_constraints(problem, conditional, xs=[x]), backend, tol):
            continue
        try:
            values[x] = maxmin_value(problem, x, cond[:Y - 1], p_x[x], method, backend, None, tol)
        except Infeasible:
            values[x] = np.inf
    ts = float(np.mean(n * values ** 2))
    return (ts, values) if per_x else ts


# ---------------------------------------------------------------------------
# Bootstrap


def order_statistic_index(alpha: float, n_draws: int) -> int:
    """Zero-based index of the ``ceil((1 - alpha) W)``-th smallest draw."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if n_draws < 1:
        raise ValueError("need at least one bootstrap draw")
    # round away float noise such as (1 - 0.05) * 200 = 190.00000000000003
    k = math.ceil(round((1.0 - alpha) * n_draws, 9))
    return min(max(k, 1), n_draws) - 1


def bootstrap_counts(sample: EmpiricalDistribution, n_draws: int, seed: int) -> NDArray:
    """``n_draws`` multinomial resamples of the (x, y) cells, one RNG stream each.

    Stream ``w`` is seeded by the ``w``-th child of ``SeedSequence(seed)``, so
    draw ``w`` is the same whatever the total count or worker layout.
    """
    children = np.random.SeedSequence(seed).spawn(n_draws)
    p = sample.joint.ravel()
    out = np.empty((n_draws,) + sample.counts.shape, dtype=np.int64)
    for w, child in enumerate(children):
        rng = np.random.Generator(np.random.Philox(child))
        out[w] = rng.multinomial(sample.n, p).reshape(sample.counts.shape)
    return out


def bootstrap_statistics(problem: BaselineProblem, sample: EmpiricalDistribution,
                         draws: NDArray, sets: PredictedSets) -> NDArray:
    """Recentered statistics ``TS^w`` for the resampled count tables ``draws``."""
    Y, X = problem.shape[0], problem.shape[1]
    n = sample.n
    base = sample.joint
    out = np.zeros(len(draws))
    polys = [sets[x] for x in range(X)]
    if any(p is None for p in polys):
        return np.full(len(draws), np.inf)
    for w, counts in enumerate(draws):
        jw = counts / n
        total = 0.0
        for x in range(X):
            shift = jw[x, :Y - 1] - base[x, :Y - 1]
            scale = jw[x].sum() - base[x].sum()
            total += recentered_value(polys[x], shift, scale) ** 2
        out[w] = n * total / X
    return out


def bootstrap_critical_value(problem: BaselineProblem, sample: EmpiricalDistribution,
                             n_draws: int, alpha: float, seed: int,
                             sets: PredictedSets | None = None,
                             return_draws: bool = False):
    """``ceil((1-alpha) W)``-th order statistic of the recentered bootstrap statistics."""
    idx = order_statistic_index(alpha, n_draws)
    sets = sets if sets is not None else PredictedSets(problem)
    stats = bootstrap_statistics(problem, sample, bootstrap_counts(sample, n_draws, seed), sets)
    cv = float(np.sort(stats)[idx])
    return (cv, stats) if return_draws else cv


# ---------------------------------------------------------------------------
# Test results and confidence regions


@dataclass(frozen=True)
class TestResult:
    """Outcome of testing ``H0: theta0 = theta`` at one significance level.

    ``critical_value`` is NaN when the bootstrap was skipped because the
    verdict was already settled (statistic zero or infinite).
    """

    __test__ = False   # not a pytest class

    theta: tuple
    ts: float
    critical_value: float
    reject: bool
    bootstrap_draws: int
    alpha: float

    def __post_init__(self):
        if not math.isnan(self.critical_value) and self.reject != (self.ts > self.critical_value):
            raise ValueError("reject must equal ts > critical_value")

    def to_dict(self) -> dict:
        return {"theta": list(self.theta), "ts": self.ts, "critical_value": self.critical_value,
                "reject": self.reject, "bootstrap_draws": self.bootstrap_draws,
                "alpha": self.alpha}


def _region_task(args):
    family, theta, sample, alphas, n_draws, seed, method, backend, tol, always_bootstrap = args
    try:
        problem = family.problem(theta)
    except ValueError:
        return {"ts": math.inf, "cv": {a: math.nan for a in alphas}, "status": "invalid"}
    sets = PredictedSets(problem, backend, tol)
    try:
        ts = test_statistic(problem, sample, method, backend, sets, tol)
    except SolverFailure as err:
        return {"ts": math.nan, "cv": {a: math.nan for a in alphas}, "status": "solver-failure",
                "message": str(err)}
    cv = {a: math.nan for a in alphas}
    if math.isfinite(ts) and (ts > 0.0 or always_bootstrap):
        draws = bootstrap_statistics(problem, sample, bootstrap_counts(sample, n_draws, seed),
                                     sets.build())
        srt = np.sort(draws)
        cv = {a: float(srt[order_statistic_index(a, n_draws)]) for a in alphas}
    return {"ts": ts, "cv": cv, "status": "ok"}


@dataclass
class RegionReport:
    """Per-point statistics, critical values and verdicts for every level in ``alphas``."""

    points: NDArray
    names: tuple
    alphas: tuple
    ts: NDArray
    critical_values: NDArray          # [point, alpha]
    status: list
    n_draws: int
    meta: dict = field(default_factory=dict)

    def reject(self, alpha: float) -> NDArray:
        j = self.alphas.index(alpha)
        cv = self.critical_values[:, j]
        settled = np.isnan(cv)
        out = np.where(settled, self.ts > 0.0, self.ts > cv)
        out[np.isnan(self.ts)] = False
        return out

    def region(self, alpha: float) -> NDArray:
        """Points not rejected at level ``alpha``."""
        ok = np.array([s == "ok" for s in self.status])
        return self.points[ok & ~self.reject(alpha)]

    def results(self, alpha: float) -> list:
        j = self.alphas.index(alpha)
        rej = self.reject(alpha)
        return [TestResult(tuple(map(float, p)), float(t), float(c), bool(r), self.n_draws, alpha)
                for p, t, c, r in zip(self.points, self.ts, self.critical_values[:, j], rej)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = list(self.names) + ["ts"]
        for a in self.alphas:
            head += [f"cv_{a:g}", f"reject_{a:g}"]
        w.writerow(head + ["status"])
        rejects = [self.reject(a) for a in self.alphas]
        for i, p in enumerate(self.points):
            row = [f"{v:.12g}" for v in p] + [f"{self.ts[i]:.12g}"]
            for j in range(len(self.alphas)):
                row += [f"{self.critical_values[i, j]:.12g}", int(rejects[j][i])]
            w.writerow(row + [self.status[i]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"names": list(self.names), "alphas": list(self.alphas), "n_draws": self.n_draws,
                "points": self.points.tolist(),
                "ts": [t if math.isfinite(t) else str(t) for t in self.ts.tolist()],
                "critical_values": [[c if math.isfinite(c) else None for c in row]
                                    for row in self.critical_values.tolist()],
                "status": list(self.status), "meta": self.meta,
                "region_sizes": {f"{a:g}": int(len(self.region(a))) for a in self.alphas}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def confidence_region(family, grid, sample: EmpiricalDistribution,
                      alphas: Sequence[float] = (0.05, 0.5), n_draws: int = 500,
                      seed: int = 0, method: str = "dual", backend: str = "highs",
                      tol: Tolerances = DEFAULT, workers: int | None = None,
                      journal: Journal | None = None,
                      always_bootstrap: bool = False) -> RegionReport:
    """Test every grid point and collect the non-rejected ones.

    Every point uses the same bootstrap draws (same ``seed``). Points where
    the statistic is zero are accepted at every level and points with an
    empty predicted set are rejected, both without bootstrapping unless
    ``always_bootstrap`` is set.
    """
    alphas = tuple(float(a) for a in alphas)
    for a in alphas:
        order_statistic_index(a, n_draws)
    journal = journal if journal is not None else Journal(None)
    tag = "region:" + theta_key(np.r_[sample.counts.ravel(), alphas, n_draws, seed],
                                method + str(always_bootstrap))
    keys = [theta_key(t, tag) for t in grid.points]
    todo = [i for i, k in enumerate(keys) if k not in journal]
    jobs = [(family, grid.points[i], sample, alphas, n_draws, seed, method, backend, tol,
             always_bootstrap) for i in todo]
    for i, res in zip(todo, parallel_map(_region_task, jobs, workers)):
        rec = {"theta": grid.points[i].tolist(), "status": res["status"],
               "ts": res["ts"] if math.isfinite(res["ts"]) else str(res["ts"]),
               "cv": [res["cv"][a] if math.isfinite(res["cv"][a]) else None for a in alphas]}
        journal.add(keys[i], rec)
    ts, cvs, status = [], [], []
    for k in keys:
        rec = journal.get(k)
        ts.append(float(rec["ts"]))
        cvs.append([math.nan if c is None else c for c in rec["cv"]])
        status.append(rec["status"])
    meta = {"family": family.describe(), "method": method, "backend": backend, "seed": seed,
            "tolerances": tol.to_dict(), "resumed": len(keys) - len(todo)}
    return RegionReport(np.asarray(grid.points), tuple(grid.names), alphas, np.asarray(ts),
                        np.asarray(cvs, float).reshape(len(keys), len(alphas)), status,
                        n_draws, meta)
