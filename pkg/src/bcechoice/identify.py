"""Identified sets over parameter grids.

A parameter value belongs to the identified set when, at every covariate
value, some BCE reproduces the observed choice probabilities. The sweep
checks this LP feasibility grid point by grid point and summarises the
feasible points as per-coordinate projections.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.stats import qmc

from .bce import assemble_constraints, is_feasible
from .errors import Infeasible, SolverFailure
from .journal import Journal, theta_key
from .model import BaselineProblem
from .parallel import parallel_map
from .solver import LinearProgram, Status, solve_lp
from .tolerances import DEFAULT, Tolerances

FEASIBLE, INFEASIBLE, FAILURE = "feasible", "infeasible", "solver-failure"


@dataclass(frozen=True)
class ThetaGrid:
    """Finite set of parameter vectors with declared coordinate bounds."""

    points: NDArray
    names: tuple
    provenance: str = "explicit"
    bounds: tuple = ()

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 0:
            raise ValueError("a grid needs at least one point")
        if pts.shape[1] != len(self.names):
            raise ValueError("one name per coordinate")
        bounds = tuple(tuple(map(float, b)) for b in self.bounds) if self.bounds else \
            tuple((float(lo), float(hi)) for lo, hi in zip(pts.min(axis=0), pts.max(axis=0)))
        for k, (lo, hi) in enumerate(bounds):
            if np.any(pts[:, k] < lo - 1e-12) or np.any(pts[:, k] > hi + 1e-12):
                raise ValueError(f"grid points leave the bounds of {self.names[k]}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "names", tuple(self.names))

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def box(cls, names: Sequence[str], bounds: Sequence, steps: Sequence[float]) -> "ThetaGrid":
        """Lattice with the given step in each coordinate, endpoints included."""
        axes = []
        for (lo, hi), step in zip(bounds, steps):
            n = int(round((hi - lo) / step)) + 1
            axes.append(np.round(lo + step * np.arange(n), 12))
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([m.ravel() for m in mesh])
        return cls(pts, tuple(names), "box-lattice", tuple(bounds))

    def to_dict(self) -> dict:
        return {"names": list(self.names), "provenance": self.provenance,
                "bounds": [list(b) for b in self.bounds], "points": self.points.tolist()}


# ---------------------------------------------------------------------------
# Per-point feasibility


def check_point(problem: BaselineProblem, probs: NDArray, backend: str = "highs",
                tol: Tolerances = DEFAULT, order: Sequence[int] | None = None) -> tuple[str, int | None]:
    """Verdict for one parameter value and the first covariate index that failed.

    Covariate values are checked one LP at a time and the sweep stops at the
    first infeasible one.
    """
    X = problem.shape[1]
    order = range(X) if order is None else order
    for x in order:
        try:
            ok = is_feasible(assemble_constraints(problem, probs, xs=[x]), backend, tol)
        except SolverFailure:
            return FAILURE, int(x)
        if not ok:
            return INFEASIBLE, int(x)
    return FEASIBLE, None


SWEEP_CHUNK = 16


def _check_chunk(args):
    """Sequential verdicts for a chunk of grid points.

    Covariate values that recently failed are tried first, which usually
    settles an infeasible point with one LP. The order restarts with every
    chunk, so results do not depend on how chunks are spread over workers.
    """
    family, thetas, probs, backend, tol = args
    misses: dict = {}
    out = []
    for theta in thetas:
        try:
            problem = family.problem(theta)
        except ValueError:
            out.append((INFEASIBLE, None))
            continue
        X = problem.shape[1]
        order = sorted(range(X), key=lambda x: (-misses.get(x, 0), x))
        verdict, x = check_point(problem, probs, backend, tol, order)
        if x is not None:
            misses[x] = misses.get(x, 0) + 1
        out.append((verdict, x))
    return out


# ---------------------------------------------------------------------------
# Reports and projections


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_at_bound: bool = False
    hi_at_cap: bool = False

    def render(self, digits: int = 4) -> str:
        hi = f"≥ {self.hi:.{digits}g}" if self.hi_at_cap else f"{self.hi:.{digits}g}"
        return f"[{self.lo:.{digits}g}, {hi}]"

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "lo_at_bound": self.lo_at_bound,
                "hi_at_cap": self.hi_at_cap}


def project(points: NDArray, feasible: NDArray, coord: int,
            bounds: tuple, gap_factor: float = 2.0) -> list[Interval]:
    """Projection of the feasible points on one coordinate as a union of intervals.

    Adjacent feasible values further apart than ``gap_factor`` times the
    local grid step start a new interval. The local step at a pair of
    feasible values is the larger of the grid spacings just after the lower
    value and just before the upper one.
    """
    vals = np.unique(np.round(points[feasible, coord], 12))
    if vals.size == 0:
        return []
    grid_vals = np.unique(np.round(points[:, coord], 12))
    lo_b, hi_b = bounds

    def spacing_after(v):
        i = np.searchsorted(grid_vals, v, side="right")
        return grid_vals[i] - v if i < grid_vals.size else np.inf

    def spacing_before(v):
        i = np.searchsorted(grid_vals, v, side="left")
        return v - grid_vals[i - 1] if i > 0 else np.inf

    pieces, start = [], vals[0]
    for a, b in zip(vals[:-1], vals[1:]):
        step = max(spacing_after(a), spacing_before(b))
        if b - a > gap_factor * step + 1e-9:
            pieces.append((start, a))
            start = b
    pieces.append((start, vals[-1]))
    return [Interval(float(lo), float(hi), bool(abs(lo - lo_b) <= 1e-9),
                     bool(abs(hi - hi_b) <= 1e-9)) for lo, hi in pieces]


@dataclass
class IdentifiedSetReport:
    grid: ThetaGrid
    verdicts: list
    failed_at: list
    metadata: dict = field(default_factory=dict)

    @property
    def feasible_mask(self) -> NDArray:
        return np.array([v == FEASIBLE for v in self.verdicts])

    @property
    def feasible_points(self) -> NDArray:
        return self.grid.points[self.feasible_mask]

    @property
    def failures(self) -> int:
        return sum(v == FAILURE for v in self.verdicts)

    def projections(self, gap_factor: float = 2.0) -> dict:
        mask = self.feasible_mask
        return {name: project(self.grid.points, mask, k, self.grid.bounds[k], gap_factor)
                for k, name in enumerate(self.grid.names)}

    def projection_table(self) -> dict:
        return {name: " ∪ ".join(iv.render() for iv in ivs) or "empty"
                for name, ivs in self.projections().items()}

    def to_dict(self) -> dict:
        return {"kind": "identified-set", "grid": self.grid.to_dict(),
                "verdicts": list(self.verdicts), "failed_at": list(self.failed_at),
                "projections": {k: [iv.to_dict() for iv in v]
                                for k, v in self.projections().items()},
                "metadata": self.metadata}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.grid.names) + ["verdict", "failed_at_x"])
        for p, v, f in zip(self.grid.points, self.verdicts, self.failed_at):
            w.writerow([f"{c:.10g}" for c in p] + [v, "" if f is None else f])
        return buf.getvalue()


def identified_set(family, grid: ThetaGrid, probs: NDArray, backend: str = "highs",
                   tol: Tolerances = DEFAULT, workers: int | None = None,
                   journal: Journal | None = None) -> IdentifiedSetReport:
    """Feasibility verdict for every grid point under choice probabilities ``probs``.

    ``probs`` is ``P0(y | x)`` indexed ``[x, y]``, either exact population
    probabilities or a sample's conditional frequencies. Solver failures are
    recorded per point and do not stop the sweep.
    """
    probs = np.asarray(probs, dtype=float)
    journal = journal if journal is not None else Journal(None)
    tag = "identify:" + theta_key(probs.ravel())
    keys = [theta_key(t, tag) for t in grid.points]
    todo = [i for i, k in enumerate(keys) if k not in journal]
    chunks = [todo[i:i + SWEEP_CHUNK] for i in range(0, len(todo), SWEEP_CHUNK)]
    jobs = [(family, grid.points[c], probs, backend, tol) for c in chunks]
    results = [r for part in parallel_map(_check_chunk, jobs, workers) for r in part]
    for i, (verdict, x) in zip(todo, results):
        journal.add(keys[i], {"theta": grid.points[i].tolist(), "verdict": verdict,
                              "failed_at": x})
    verdicts = [journal.get(k)["verdict"] for k in keys]
    failed = [journal.get(k)["failed_at"] for k in keys]
    meta = {"family": family.describe(), "tolerances": tol.to_dict(), "backend": backend,
            "resumed": len(keys) - len(todo)}
    return IdentifiedSetReport(grid, verdicts, failed, meta)


# ---------------------------------------------------------------------------
# Grid construction


def halton_cloud(center: NDArray, scale: NDArray, n_points: int, n_keep: int,
                 seed: int, bounds: Sequence | None = None) -> NDArray:
    """``n_keep`` points drawn at random from a scrambled Halton set around ``center``.

    The Halton set fills the box ``center +- scale``; with ``bounds`` the box
    is clipped to them.
    """
    center = np.asarray(center, float)
    scale = np.broadcast_to(np.asarray(scale, float), center.shape)
    rng = np.random.default_rng(seed)
    sampler = qmc.Halton(d=center.size, scramble=True, seed=rng)
    pts = center + scale * (2.0 * sampler.random(n_points) - 1.0)
    if bounds is not None:
        lo, hi = np.array(bounds, float).T
        pts = np.clip(pts, lo, hi)
    keep = rng.choice(n_points, size=min(n_keep, n_points), replace=False)
    return pts[np.sort(keep)]


def build_grid_annealing(objective: Callable[[NDArray], float], starts: NDArray,
                         temps: Sequence[float], max_iter: int, seed: int,
                         bounds: Sequence, step: Sequence[float],
                         names: Sequence[str] | None = None,
                         snap: bool = False) -> ThetaGrid:
    """Every point visited by simulated annealing runs, proposals included.

    One run starts from each row of ``starts`` at each initial temperature.
    Proposals are Gaussian with per-coordinate scale ``step``, clipped to
    ``bounds``; the temperature decays geometrically to 1e-3 of its start.
    With ``snap`` points are rounded to the ``step`` lattice.
    """
    starts = np.atleast_2d(np.asarray(starts, float))
    lo, hi = np.array(bounds, float).T
    step = np.asarray(step, float)
    rng = np.random.default_rng(seed)

    def tidy(p):
        p = np.clip(p, lo, hi)
        if snap:
            p = np.clip(lo + np.round((p - lo) / step) * step, lo, hi)
        return p

    visited = [tidy(s) for s in starts]
    decay = 1e-3 ** (1.0 / max(max_iter, 1))
    for s in starts:
        for t0 in temps:
            cur = tidy(s)
            f_cur = objective(cur)
            temp = float(t0)
            for _ in range(max_iter):
                prop = tidy(cur + step * rng.standard_normal(cur.size))
                visited.append(prop)
                f_prop = objective(prop)
                if f_prop <= f_cur or rng.uniform() < np.exp(-(f_prop - f_cur) / max(temp, 1e-300)):
                    cur, f_cur = prop, f_prop
                temp *= decay
    pts = np.unique(np.round(np.array(visited), 10), axis=0)
    names = tuple(names) if names else tuple(f"theta{k}" for k in range(starts.shape[1]))
    return ThetaGrid(pts, names, "annealing-trace", tuple(map(tuple, np.array(bounds))))


# ---------------------------------------------------------------------------
# Grid-free LP over priors


@dataclass
class JointPriorRegion:
    """Feasible joint priors ``pi(v, e | x)`` when utilities are known.

    The LP has the prior as extra unknowns, so ``bounds[x, e, v]`` are exact
    min and max of each prior coordinate over the identified region.
    """

    problem: BaselineProblem
    probs: NDArray
    lower: NDArray
    upper: NDArray
    eps_fixed: bool

    def contains(self, prior_joint: NDArray, tol: Tolerances = DEFAULT) -> bool:
        """Whether a given ``pi[x, e, v]`` is in the region."""
        pi = np.asarray(prior_joint, float)
        _, X, E, V = self.problem.shape
        for x in range(X):
            sub = _joint_prior_lp(self.problem, self.probs, x, self.eps_fixed)
            A_eq, b_eq, A_ub, b_ub, n_pi, n_p = sub
            # pin the prior unknowns
            pin = sp.hstack([sp.identity(n_pi), sp.csr_matrix((n_pi, n_p))])
            lp = LinearProgram(np.zeros(n_pi + n_p), sp.vstack([A_eq, pin]).tocsr(),
                               np.r_[b_eq, pi[x].ravel()], A_ub, b_ub)
            res = solve_lp(lp, tol=tol)
            if res.status is Status.INFEASIBLE:
                return False
            if not res.optimal:
                raise SolverFailure("membership LP failed", res.diagnostic)
        return True


def _joint_prior_lp(problem: BaselineProblem, probs: NDArray, x: int, eps_fixed: bool):
    """Rows over unknowns ``[pi(e, v) | P(e, y, v)]`` for one covariate value."""
    Y, _, E, V = problem.shape
    n_pi, n_p = E * V, E * Y * V
    base = assemble_constraints(problem, None, xs=[x])
    # consistency rows: sum_y P(e, y, v) - pi(e, v) = 0
    cons = sp.hstack([-sp.identity(n_pi), base.A_eq[:base.n_consistency]])
    # data match with joint unknowns: sum_{e, v} P(e, y, v) = P0(y | x)
    e, y, v = np.meshgrid(np.arange(E), np.arange(Y), np.arange(V), indexing="ij")
    rows, cols = y.ravel(), ((e * Y + y) * V + v).ravel()
    data = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(Y, n_p))
    blocks = [cons, sp.hstack([sp.csr_matrix((Y, n_pi)), data])]
    rhs = [np.zeros(n_pi), np.asarray(probs[x], float)]
    if eps_fixed:
        ee, vv = np.meshgrid(np.arange(E), np.arange(V), indexing="ij")
        marg = sp.csr_matrix((np.ones(E * V), (ee.ravel(), (ee * V + vv).ravel())),
                             shape=(E, n_pi))
        blocks.append(sp.hstack([marg, sp.csr_matrix((E, n_p))]))
        rhs.append(problem.eps_pmf[x])
    A_eq = sp.vstack(blocks).tocsr()
    A_ub = sp.hstack([sp.csr_matrix((base.A_ineq.shape[0], n_pi)), base.scaled_ineq()]).tocsr()
    return A_eq, np.concatenate(rhs), A_ub, np.zeros(A_ub.shape[0]), n_pi, n_p


def identified_set_joint_lp(problem: BaselineProblem, probs: NDArray,
                            eps_fixed: bool = False, backend: str = "highs",
                            tol: Tolerances = DEFAULT) -> JointPriorRegion:
    """Projection bounds of the identified set of joint priors, with no grid.

    Utilities come from ``problem``; its prior and taste pmfs are ignored
    except that ``eps_fixed`` pins the taste marginal to ``problem.eps_pmf``.
    Raises :class:`Infeasible` if no prior rationalises ``probs``.
    """
    probs = np.asarray(probs, dtype=float)
    _, X, E, V = problem.shape
    lower = np.zeros((X, E, V))
    upper = np.zeros((X, E, V))
    for x in range(X):
        A_eq, b_eq, A_ub, b_ub, n_pi, n_p = _joint_prior_lp(problem, probs, x, eps_fixed)
        for j in range(n_pi):
            c = np.zeros(n_pi + n_p)
            c[j] = 1.0
            for maximize, store in ((False, lower), (True, upper)):
                res = solve_lp(LinearProgram(c, A_eq, b_eq, A_ub, b_ub, maximize=maximize),
                               backend, tol)
                if res.status is Status.INFEASIBLE:
                    raise Infeasible(f"no prior rationalises the data at x={x}")
                if not res.optimal:
                    raise SolverFailure("projection LP failed", res.diagnostic)
                store[x].flat[j] = res.value
    return JointPriorRegion(problem, probs, lower, upper, eps_fixed)
