"""One-player Bayes correlated equilibria as a linear system.

For each covariate value ``x`` the unknowns are the joint pmfs
``P(y, v | x, e)`` for every taste ``e``. Three row families describe them:

* consistency, ``sum_y P(y, v | x, e) = prior(v | x, e)``;
* obedience, ``-sum_v P(y, v | x, e) [u(y, v) - u(y', v)] <= 0`` for ``y' != y``;
* data match (optional), ``sum_{e, v} P(y, v | x, e) eps(e | x) = P0(y | x)``.

Columns are ordered ``[x][e][y][v]`` with ``v`` fastest. The data-match
rows couple the taste blocks of one covariate value, so every solve works on
a whole ``x`` block.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from .errors import Infeasible, NotObedient, SolverFailure
from .geometry import Polytope, minkowski_sum, polytope_from_oracle
from .model import (BCEJoint, BaselineProblem, InformationStructure,
                    Strategy)
from .solver import LinearProgram, LPResult, Status, solve_lp
from .tolerances import DEFAULT, Tolerances

__all__ = [
    "BCEJoint", "BCEConstraintSystem", "assemble_constraints", "is_feasible",
    "extremal_choice_prob", "predicted_set_slice", "SupportSample",
    "PredictedSetOracle", "predicted_polytope", "canonical_direct_info", "bce_residuals", "write_lp",
]


@dataclass(frozen=True)
class BCEConstraintSystem:
    """Sparse BCE rows for the covariate indices ``xs`` of ``problem``.

    ``A_eq`` stacks consistency rows (ordered ``[x][e][v]``) and then, when
    data are attached, data-match rows (ordered ``[x][y]``). ``A_ineq`` holds
    the obedience rows ordered ``[x][e][y][y']`` with ``y'`` skipping ``y``.
    """

    A_eq: sp.csr_matrix
    B_eq: NDArray
    A_ineq: sp.csr_matrix
    xs: tuple
    n_actions: int
    n_eps: int
    n_states: int
    n_consistency: int
    n_obedience: int
    n_data: int

    @property
    def n_vars(self) -> int:
        return len(self.xs) * self.n_eps * self.n_actions * self.n_states

    def column(self, x: int, e: int, y: int, v: int) -> int:
        """Column of ``P(y, v | x, e)``; ``x`` is a covariate index of the problem."""
        k = self.xs.index(x)
        return ((k * self.n_eps + e) * self.n_actions + y) * self.n_states + v

    @property
    def variable_index(self) -> dict:
        idx = {}
        for x in self.xs:
            for e in range(self.n_eps):
                for y in range(self.n_actions):
                    for v in range(self.n_states):
                        idx[(x, e, y, v)] = self.column(x, e, y, v)
        return idx

    def scaled_ineq(self) -> sp.csr_matrix:
        """Obedience rows divided by their largest absolute coefficient.

        Positive row scaling leaves the feasible set unchanged and keeps the
        solver's tolerances meaningful when utilities are large.
        """
        A = self.A_ineq.tocsr()
        if A.shape[0] == 0:
            return A
        scale = np.asarray(abs(A).max(axis=1).todense()).ravel()
        scale[scale == 0] = 1.0
        return sp.diags(1.0 / scale) @ A

    def joint_from_solution(self, z: NDArray) -> NDArray:
        return z.reshape(len(self.xs), self.n_eps, self.n_actions, self.n_states)


def _pairs(Y: int) -> tuple[NDArray, NDArray]:
    ys, yps = [], []
    for y in range(Y):
        for yp in range(Y):
            if yp != y:
                ys.append(y)
                yps.append(yp)
    return np.asarray(ys, dtype=int), np.asarray(yps, dtype=int)


def assemble_constraints(problem: BaselineProblem, empirical: NDArray | None = None,
                         xs: Sequence[int] | None = None) -> BCEConstraintSystem:
    """BCE rows for ``problem``, with data-match rows when ``empirical`` is given.

    ``empirical`` is ``P0(y | x)`` with shape ``[x, y]`` over the full
    covariate support of the problem; ``xs`` restricts the system to a subset
    of covariate indices.
    """
    Y, X, E, V = problem.shape
    xs = tuple(range(X)) if xs is None else tuple(int(x) for x in xs)
    K = len(xs)
    blk = E * Y * V
    ys, yps = _pairs(Y)
    P = ys.size

    # consistency: row (k, e, v) touches columns (k, e, y, v) for all y
    k, e, y, v = np.meshgrid(np.arange(K), np.arange(E), np.arange(Y), np.arange(V),
                             indexing="ij")
    cols = (((k * E + e) * Y + y) * V + v).ravel()
    rows = ((k * E + e) * V + v).ravel()
    n_cons = K * E * V
    A_cons = sp.csr_matrix((np.ones(cols.size), (rows, cols)), shape=(n_cons, K * blk))
    b_cons = problem.prior[list(xs)].reshape(-1)

    # obedience: row (k, e, p) touches columns (k, e, ys[p], v)
    u = problem.utility[:, list(xs)]                     # [y, k, e, v]
    diff = u[ys] - u[yps]                                # [p, k, e, v]
    k, e, p, v = np.meshgrid(np.arange(K), np.arange(E), np.arange(P), np.arange(V),
                             indexing="ij")
    cols = (((k * E + e) * Y + ys[p]) * V + v).ravel()
    rows = ((k * E + e) * P + p).ravel()
    vals = -diff.transpose(1, 2, 0, 3).ravel()
    n_obed = K * E * P
    A_obed = sp.csr_matrix((vals, (rows, cols)), shape=(n_obed, K * blk))
    A_obed.eliminate_zeros()

    blocks, rhs, n_data = [A_cons], [b_cons], 0
    if empirical is not None:
        emp = np.asarray(empirical, dtype=float)
        if emp.shape != (X, Y):
            raise ValueError(f"empirical must have shape {(X, Y)}, got {emp.shape}")
        k, e, y, v = np.meshgrid(np.arange(K), np.arange(E), np.arange(Y), np.arange(V),
                                 indexing="ij")
        cols = (((k * E + e) * Y + y) * V + v).ravel()
        rows = (k * Y + y).ravel()
        vals = problem.eps_pmf[list(xs)][k, e].ravel()
        n_data = K * Y
        blocks.append(sp.csr_matrix((vals, (rows, cols)), shape=(n_data, K * blk)))
        rhs.append(emp[list(xs)].reshape(-1))
    A_eq = sp.vstack(blocks).tocsr()
    return BCEConstraintSystem(A_eq, np.concatenate(rhs), A_obed, xs, Y, E, V,
                               n_cons, n_obed, n_data)


def is_feasible(system: BCEConstraintSystem, backend: str = "highs",
                tol: Tolerances = DEFAULT) -> bool:
    """Phase-one test: feasible iff the total artificial slack can be driven to ~0.

    Raises :class:`SolverFailure` when the solver cannot decide.
    """
    n = system.n_vars
    m_eq = system.A_eq.shape[0]
    A_ub = system.scaled_ineq()
    m_ub = A_ub.shape[0]
    # variables: z (n), s_plus (m_eq), s_minus (m_eq), s_ub (m_ub), all >= 0
    I_eq = sp.identity(m_eq, format="csr")
    A_eq = sp.hstack([system.A_eq, I_eq, -I_eq, sp.csr_matrix((m_eq, m_ub))]).tocsr()
    A_in = sp.hstack([A_ub, sp.csr_matrix((m_ub, 2 * m_eq)),
                      -sp.identity(m_ub, format="csr")]).tocsr()
    c = np.r_[np.zeros(n), np.ones(2 * m_eq + m_ub)]
    lp = LinearProgram(c, A_eq, system.B_eq, A_in, np.zeros(m_ub))
    res = solve_lp(lp, backend, tol)
    if not res.optimal:
        raise SolverFailure("phase-one LP did not solve", res.diagnostic)
    return res.value <= tol.feasibility


def _block_lp(system: BCEConstraintSystem, c: NDArray, maximize: bool) -> LinearProgram:
    return LinearProgram(c, system.A_eq, system.B_eq, system.scaled_ineq(),
                         np.zeros(system.A_ineq.shape[0]), maximize=maximize)


def _marginal_objective(problem: BaselineProblem, x: int, weights: NDArray) -> NDArray:
    """Objective ``sum_y weights[y] P(y | x)`` over one x block."""
    Y, _, E, V = problem.shape
    c = problem.eps_pmf[x][:, None, None] * np.asarray(weights, float)[None, :, None]
    return np.broadcast_to(c, (E, Y, V)).ravel()


def extremal_choice_prob(problem: BaselineProblem, y: int, x: int, sense: str = "max",
                         empirical: NDArray | None = None, backend: str = "highs",
                         tol: Tolerances = DEFAULT) -> float:
    """Largest (``sense="max"``) or smallest predicted ``P(y | x)`` over the BCEs."""
    if sense not in ("max", "min"):
        raise ValueError("sense must be 'max' or 'min'")
    system = assemble_constraints(problem, empirical, xs=[x])
    w = np.zeros(len(problem.actions))
    w[y] = 1.0
    res = solve_lp(_block_lp(system, _marginal_objective(problem, x, w), sense == "max"),
                   backend, tol)
    if res.status is Status.INFEASIBLE:
        raise Infeasible(f"no BCE at x={x}")
    if not res.optimal:
        raise SolverFailure("extremal choice LP failed", res.diagnostic)
    return float(res.value)


@dataclass(frozen=True)
class SupportSample:
    direction: NDArray
    value: float
    pmf: NDArray
    joint: NDArray


class PredictedSetOracle:
    """Support function of the predicted choice-probability set at one ``x``.

    The constraint rows are assembled once; each query only swaps the
    objective. ``support(d)`` maximises ``d @ P(. | x)`` over BCEs.
    """

    def __init__(self, problem: BaselineProblem, x: int,
                 empirical: NDArray | None = None, backend: str = "highs",
                 tol: Tolerances = DEFAULT):
        self.problem = problem
        self.x = x
        self.backend = backend
        self.tol = tol
        self.system = assemble_constraints(problem, empirical, xs=[x])
        self._A_ub = self.system.scaled_ineq()
        self.calls = 0

    def solve(self, direction: NDArray) -> LPResult:
        c = _marginal_objective(self.problem, self.x, direction)
        lp = LinearProgram(c, self.system.A_eq, self.system.B_eq, self._A_ub,
                           np.zeros(self._A_ub.shape[0]), maximize=True)
        self.calls += 1
        res = solve_lp(lp, self.backend, self.tol)
        if res.status is Status.INFEASIBLE:
            raise Infeasible(f"no BCE at x={self.x}")
        if not res.optimal:
            raise SolverFailure("support LP failed", res.diagnostic)
        return res

    def support(self, direction: NDArray) -> tuple[float, NDArray]:
        """Support value and the maximising choice pmf."""
        res = self.solve(direction)
        joint = self.system.joint_from_solution(res.x)[0]
        pmf = np.einsum("eyv,e->y", joint, self.problem.eps_pmf[self.x])
        return float(res.value), pmf


def predicted_polytope(problem: BaselineProblem, x: int, coords: Sequence[int] | None = None,
                       backend: str = "highs", tol: Tolerances = DEFAULT) -> Polytope:
    """Exact vertex list of the predicted choice-probability set at ``x``.

    Only the coordinates ``coords`` (default: all but the last action) are
    kept. Without data rows the taste blocks of an ``x`` block are
    independent, so the set is the ``eps``-weighted Minkowski sum of the
    per-taste sets, each recovered from its own small LP.
    """
    Y, _, E, V = problem.shape
    coords = list(range(Y - 1)) if coords is None else list(coords)
    system = assemble_constraints(problem, None, xs=[x])
    A_ub = system.scaled_ineq()
    n_pairs, width = Y * (Y - 1), Y * V
    parts, weights = [], []
    for e in range(E):
        w = problem.eps_pmf[x, e]
        if w <= 0.0:
            continue
        cols = slice(e * width, (e + 1) * width)
        A_eq = system.A_eq[e * V:(e + 1) * V, cols]
        b_eq = system.B_eq[e * V:(e + 1) * V]
        A_in = A_ub[e * n_pairs:(e + 1) * n_pairs, cols]

        def oracle(d, A_eq=A_eq, b_eq=b_eq, A_in=A_in):
            gain = np.zeros(Y)
            gain[coords] = d
            lp = LinearProgram(np.repeat(gain, V), A_eq, b_eq, A_in,
                               np.zeros(n_pairs), maximize=True)
            res = solve_lp(lp, backend, tol)
            if res.status is Status.INFEASIBLE:
                raise Infeasible(f"no BCE at x={x}, e={e}")
            if not res.optimal:
                raise SolverFailure("support LP failed", res.diagnostic)
            return res.x.reshape(Y, V).sum(axis=1)[coords]

        parts.append(polytope_from_oracle(oracle, len(coords), tol=tol.hull))
        weights.append(w)
    total = minkowski_sum(parts, weights)
    calls = sum(p.oracle_calls for p in parts)
    return Polytope(total.vertices, total.origin, total.basis, calls)


def predicted_set_slice(problem: BaselineProblem, x: int, directions,
                        empirical: NDArray | None = None, backend: str = "highs",
                        tol: Tolerances = DEFAULT) -> list[SupportSample]:
    """Support-function samples of the predicted choice-probability set at ``x``.

    Each direction is a vector over all actions. The returned pmfs are points
    of the set, so their hull is an inner approximation, while the
    half-spaces ``d @ p <= value`` give an outer one.
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if directions.shape[0] < 1:
        raise ValueError("at least one direction is needed")
    oracle = PredictedSetOracle(problem, x, empirical, backend, tol)
    out = []
    for d in directions:
        res = oracle.solve(d)
        joint = oracle.system.joint_from_solution(res.x)[0]
        pmf = np.einsum("eyv,e->y", joint, problem.eps_pmf[x])
        out.append(SupportSample(d, float(res.value), pmf, joint))
    return out


# ---------------------------------------------------------------------------
# Reading joints back as information structures


def bce_residuals(problem: BaselineProblem, joint: BCEJoint,
                  empirical: NDArray | None = None) -> dict:
    """Largest violations of the BCE rows by ``joint``.

    Obedience is reported on rows scaled by their largest coefficient, as in
    the solver. Keys: ``consistency``, ``obedience``, ``negativity`` and, when
    data are supplied, ``data_match``.
    """
    j = joint.joint
    out = {"consistency": float(np.max(np.abs(j.sum(axis=2) - problem.prior))),
           "negativity": float(max(0.0, -j.min()))}
    system = assemble_constraints(problem, empirical)
    z = j.ravel()
    ob = system.scaled_ineq() @ z
    out["obedience"] = float(max(0.0, ob.max())) if ob.size else 0.0
    if empirical is not None:
        pred = joint.choice_probs(problem)
        out["data_match"] = float(np.max(np.abs(pred - empirical)))
    return out


def obedience_gaps(problem: BaselineProblem, joint: BCEJoint) -> NDArray:
    """``sum_v P(y, v) [u(y, v) - u(y', v)]`` indexed ``[x, e, y, y']``."""
    u = problem.utility                                    # [y, x, e, v]
    own = np.einsum("xeyv,yxev->xey", joint.joint, u)
    other = np.einsum("xeyv,zxev->xeyz", joint.joint, u)
    return own[..., None] - other


def canonical_direct_info(joint: BCEJoint, problem: BaselineProblem,
                          tol: Tolerances = DEFAULT) -> tuple[InformationStructure, Strategy]:
    """Direct-recommendation structure for a BCE joint.

    Signals are actions; ``P(t = y | x, e, v) = joint(y, v | x, e) / prior(v | x, e)``
    and the strategy follows the recommendation. States with zero prior mass
    receive a uniform signal pmf. Raises :class:`NotObedient` when some
    recommendation would not be optimal.
    """
    j = np.asarray(joint.joint, dtype=float)
    Y, X, E, V = problem.shape
    if j.shape != (X, E, Y, V):
        raise ValueError("joint does not match the problem")
    gaps = obedience_gaps(problem, joint)
    spread = np.ptp(problem.utility, axis=0).max(axis=-1)            # [x, e]
    scale = np.maximum(1.0, spread)[:, :, None, None]
    worst = float(-(gaps / scale).min()) if gaps.size else 0.0
    if worst > tol.obedience:
        raise NotObedient(f"obedience violated by {worst:.3g}")
    prior = problem.prior                                            # [x, e, v]
    reachable = prior > 0.0
    sig = np.where(reachable[..., None],
                   np.divide(j.transpose(0, 1, 3, 2), prior[..., None],
                             out=np.zeros((X, E, V, Y)), where=reachable[..., None]),
                   1.0 / Y)
    sig = np.clip(sig, 0.0, None)
    sig /= sig.sum(axis=-1, keepdims=True)
    info = InformationStructure(problem.actions, sig)
    mass = np.einsum("xevt,xev->xet", sig, prior)
    active = mass > 0.0
    follow = np.broadcast_to(np.eye(Y), (X, E, Y, Y)).copy()
    follow[~active] = 0.0
    return info, Strategy(follow, active)


# ---------------------------------------------------------------------------
# Export


def write_lp(system: BCEConstraintSystem, out=None, objective: NDArray | None = None,
             maximize: bool = False) -> str:
    """Write the system in CPLEX LP text format.

    Naming scheme: column ``p_x{x}_e{e}_y{y}_v{v}`` holds ``P(y, v | x, e)``;
    rows are ``cons_x{x}_e{e}_v{v}``, ``obed_x{x}_e{e}_y{y}_d{y'}`` and
    ``data_x{x}_y{y}``, all indices being zero-based positions in the
    problem's supports. All variables are nonnegative (the LP default).
    """
    names = []
    for x in system.xs:
        for e in range(system.n_eps):
            for y in range(system.n_actions):
                for v in range(system.n_states):
                    names.append(f"p_x{x}_e{e}_y{y}_v{v}")
    buf = io.StringIO()

    def expr(row) -> str:
        row = row.tocoo()
        terms = [f"{'+' if val >= 0 else '-'} {abs(val):.17g} {names[c]}"
                 for c, val in zip(row.col, row.data)]
        return " ".join(terms) if terms else f"0 {names[0]}"

    buf.write("\\ BCE constraint system\n")
    buf.write("Maximize\n" if maximize else "Minimize\n")
    if objective is None:
        buf.write(f" obj: 0 {names[0]}\n")
    else:
        buf.write(" obj: " + expr(sp.csr_matrix(np.asarray(objective)[None, :])) + "\n")
    buf.write("Subject To\n")
    Y, E, V = system.n_actions, system.n_eps, system.n_states
    A_eq = system.A_eq.tocsr()
    for k, x in enumerate(system.xs):
        for e in range(E):
            for v in range(V):
                r = (k * E + e) * V + v
                buf.write(f" cons_x{x}_e{e}_v{v}: {expr(A_eq[r])} = {system.B_eq[r]:.17g}\n")
    A_in = system.A_ineq.tocsr()
    ys, yps = _pairs(Y)
    P = ys.size
    for k, x in enumerate(system.xs):
        for e in range(E):
            for p in range(P):
                r = (k * E + e) * P + p
                buf.write(f" obed_x{x}_e{e}_y{ys[p]}_d{yps[p]}: {expr(A_in[r])} <= 0\n")
    if system.n_data:
        for k, x in enumerate(system.xs):
            for y in range(Y):
                r = system.n_consistency + k * Y + y
                buf.write(f" data_x{x}_y{y}: {expr(A_eq[r])} = {system.B_eq[r]:.17g}\n")
    buf.write("End\n")
    text = buf.getvalue()
    if out is not None:
        with open(out, "w") as fh:
            fh.write(text)
    return text
