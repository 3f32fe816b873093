"""Linear programs and linear programs with one unit-ball constraint.

Two problem shapes are needed by the rest of the package:

* :class:`LinearProgram`, solved by :func:`solve_lp`;
* :class:`NormConstrainedProgram`, a linear program plus ``||x[ball]|| <= 1``,
  solved by :func:`solve_norm_constrained`.

Backends are selected by name. ``"highs"`` (scipy's HiGHS bindings) is the
default for LPs and ``"simplex"`` is a self-contained dense two-phase simplex
with Bland's anti-cycling rule, meant for small problems and cross-checks.
Ball-constrained programs default to ``"clarabel"`` (interior point, conic
form); ``"cutting-plane"`` is a self-contained alternative that replaces the
ball by tangent half-spaces until the LP optimum lies on the ball.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .tolerances import DEFAULT, Tolerances


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    FAILURE = "failure"


@dataclass(frozen=True)
class LinearProgram:
    """``min`` (or ``max``) ``c @ x`` subject to ``A_eq x = b_eq``, ``A_ub x <= b_ub``.

    ``nonneg[i]`` marks variable ``i`` as sign constrained (``x_i >= 0``);
    otherwise it is free. ``b_ub`` defaults to zero, which is the shape of
    every obedience system in this package. Matrices may be dense arrays or
    scipy sparse matrices.
    """

    c: np.ndarray
    A_eq: object = None
    b_eq: np.ndarray | None = None
    A_ub: object = None
    b_ub: np.ndarray | None = None
    nonneg: np.ndarray | None = None
    maximize: bool = False

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "c", c)
        n = c.size
        if self.nonneg is None:
            object.__setattr__(self, "nonneg", np.ones(n, dtype=bool))
        else:
            object.__setattr__(self, "nonneg", np.asarray(self.nonneg, dtype=bool))
        if self.nonneg.shape != (n,):
            raise ValueError("nonneg mask must have one entry per variable")
        for name in ("A_eq", "A_ub"):
            A = getattr(self, name)
            if A is not None and A.shape[1] != n:
                raise ValueError(f"{name} has {A.shape[1]} columns, expected {n}")
        if self.A_eq is not None:
            b = np.asarray(self.b_eq, dtype=float)
            if b.shape != (self.A_eq.shape[0],):
                raise ValueError("b_eq length does not match A_eq rows")
            object.__setattr__(self, "b_eq", b)
        if self.A_ub is not None:
            b = (np.zeros(self.A_ub.shape[0]) if self.b_ub is None
                 else np.asarray(self.b_ub, dtype=float))
            if b.shape != (self.A_ub.shape[0],):
                raise ValueError("b_ub length does not match A_ub rows")
            object.__setattr__(self, "b_ub", b)
        if not np.all(np.isfinite(c)):
            raise ValueError("objective has non-finite entries")

    @property
    def n_vars(self) -> int:
        return self.c.size

    def residuals(self, x: np.ndarray) -> dict:
        """Largest equality, inequality and sign violations at ``x``."""
        out = {"eq": 0.0, "ub": 0.0, "sign": 0.0}
        if self.A_eq is not None and self.A_eq.shape[0]:
            out["eq"] = float(np.max(np.abs(self.A_eq @ x - self.b_eq)))
        if self.A_ub is not None and self.A_ub.shape[0]:
            out["ub"] = float(max(0.0, np.max(self.A_ub @ x - self.b_ub)))
        if self.nonneg.any():
            out["sign"] = float(max(0.0, -np.min(x[self.nonneg])))
        return out


@dataclass(frozen=True)
class NormConstrainedProgram:
    """A linear program plus the constraint ``x[ball] @ x[ball] <= 1``."""

    lp: LinearProgram
    ball: np.ndarray

    def __post_init__(self):
        ball = np.asarray(self.ball, dtype=int)
        object.__setattr__(self, "ball", ball)
        if ball.size and (ball.min() < 0 or ball.max() >= self.lp.n_vars):
            raise ValueError("ball block indexes outside the variable range")
        if np.unique(ball).size != ball.size:
            raise ValueError("ball block has repeated indices")
        if self.lp.nonneg[ball].any():
            raise ValueError("ball block variables must be free")


@dataclass
class LPResult:
    status: Status
    value: float = float("nan")
    x: np.ndarray | None = None
    diagnostic: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


# ---------------------------------------------------------------------------
# LP backends


def solve_lp(lp: LinearProgram, backend: str = "highs",
             tol: Tolerances = DEFAULT) -> LPResult:
    """Solve ``lp`` with the named backend.

    The returned value is in the program's own sense (a maximum when
    ``lp.maximize``). Optimal results carry the constraint residuals in
    ``diagnostic["residuals"]``.
    """
    if backend == "highs":
        res = _solve_highs(lp, tol)
    elif backend == "simplex":
        res = _solve_dense_simplex(lp, tol)
    else:
        raise ValueError(f"unknown LP backend {backend!r}")
    if res.optimal:
        res.diagnostic["residuals"] = lp.residuals(res.x)
    return res


def _solve_highs(lp: LinearProgram, tol: Tolerances) -> LPResult:
    c = -lp.c if lp.maximize else lp.c
    bounds = np.where(lp.nonneg[:, None], [0.0, np.inf], [-np.inf, np.inf])
    out = linprog(
        c,
        A_ub=lp.A_ub if lp.A_ub is not None and lp.A_ub.shape[0] else None,
        b_ub=lp.b_ub if lp.A_ub is not None and lp.A_ub.shape[0] else None,
        A_eq=lp.A_eq if lp.A_eq is not None and lp.A_eq.shape[0] else None,
        b_eq=lp.b_eq if lp.A_eq is not None and lp.A_eq.shape[0] else None,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": min(1e-9, tol.lp_residual),
                 "dual_feasibility_tolerance": 1e-9},
    )
    diag = {"backend": "highs", "message": out.message, "code": int(out.status),
            "iterations": int(getattr(out, "nit", -1))}
    if out.status == 0:
        value = float(-out.fun if lp.maximize else out.fun)
        return LPResult(Status.OPTIMAL, value, np.asarray(out.x), diag)
    if out.status == 2:
        return LPResult(Status.INFEASIBLE, diagnostic=diag)
    if out.status == 3:
        return LPResult(Status.UNBOUNDED, diagnostic=diag)
    return LPResult(Status.FAILURE, diagnostic=diag)


def _to_dense(A) -> np.ndarray:
    if A is None:
        return None
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)


def _solve_dense_simplex(lp: LinearProgram, tol: Tolerances) -> LPResult:
    # Standard form: min c'z, Az = b, z >= 0, b >= 0. Free variables are
    # split into a positive and a negative part, inequalities get slacks.
    n = lp.n_vars
    free = np.flatnonzero(~lp.nonneg)
    A_eq = _to_dense(lp.A_eq)
    A_ub = _to_dense(lp.A_ub)
    m_eq = 0 if A_eq is None else A_eq.shape[0]
    m_ub = 0 if A_ub is None else A_ub.shape[0]
    n_std = n + free.size + m_ub
    A = np.zeros((m_eq + m_ub, n_std))
    b = np.zeros(m_eq + m_ub)
    if m_eq:
        A[:m_eq, :n] = A_eq
        A[:m_eq, n:n + free.size] = -A_eq[:, free]
        b[:m_eq] = lp.b_eq
    if m_ub:
        A[m_eq:, :n] = A_ub
        A[m_eq:, n:n + free.size] = -A_ub[:, free]
        A[m_eq:, n + free.size:] = np.eye(m_ub)
        b[m_eq:] = lp.b_ub
    c = np.zeros(n_std)
    c[:n] = -lp.c if lp.maximize else lp.c
    c[n:n + free.size] = -c[free]
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    status, z, value, iters = dense_simplex(A, b, c, tol=tol.feasibility)
    diag = {"backend": "simplex", "iterations": iters}
    if status is not Status.OPTIMAL:
        return LPResult(status, diagnostic=diag)
    x = z[:n].copy()
    x[free] -= z[n:n + free.size]
    value = -value if lp.maximize else value
    return LPResult(Status.OPTIMAL, float(value), x, diag)


def dense_simplex(A: np.ndarray, b: np.ndarray, c: np.ndarray,
                  tol: float = 1e-8, pivot_tol: float = 1e-11,
                  max_iter: int | None = None):
    """Two-phase tableau simplex for ``min c'z`` s.t. ``Az = b``, ``z >= 0``.

    Requires ``b >= 0``. Entering and leaving variables follow Bland's
    smallest-index rule, so the method cannot cycle. Returns
    ``(status, z, value, iterations)``.
    """
    m, n = A.shape
    if max_iter is None:
        max_iter = 50 * (m + n) + 100
    # phase one: artificial basis
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -A.sum(axis=0)
    T[m, -1] = -b.sum()
    basis = np.arange(n, n + m)
    iters = 0
    status, iters = _run_simplex(T, basis, n + m, pivot_tol, max_iter, iters)
    if status is Status.FAILURE:
        return status, None, np.nan, iters
    if -T[m, -1] > tol:
        return Status.INFEASIBLE, None, np.nan, iters

    # drive artificials out of the basis; drop redundant rows
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] >= n:
            row = np.abs(T[i, :n])
            j = np.flatnonzero(row > 1e-9)
            if j.size:
                _pivot(T, i, j[0])
                basis[i] = j[0]
            else:
                keep[i] = False
    rows = np.flatnonzero(keep)
    T2 = np.zeros((rows.size + 1, n + 1))
    T2[:-1, :n] = T[rows, :n]
    T2[:-1, -1] = T[rows, -1]
    basis = basis[rows]
    T2[-1, :n] = c
    T2[-1, -1] = 0.0
    for i, j in enumerate(basis):
        T2[-1] -= c[j] * T2[i]
    status, iters = _run_simplex(T2, basis, n, pivot_tol, max_iter, iters)
    if status is not Status.OPTIMAL:
        return status, None, np.nan, iters
    z = np.zeros(n)
    z[basis] = T2[:-1, -1]
    z[np.abs(z) < 1e-15] = 0.0
    return Status.OPTIMAL, z, float(c @ z), iters


def _pivot(T: np.ndarray, r: int, j: int) -> None:
    T[r] /= T[r, j]
    col = T[:, j].copy()
    col[r] = 0.0
    T -= np.outer(col, T[r])


def _run_simplex(T, basis, n_cols, pivot_tol, max_iter, iters):
    m = T.shape[0] - 1
    while True:
        if iters >= max_iter:
            return Status.FAILURE, iters
        reduced = T[m, :n_cols]
        candidates = np.flatnonzero(reduced < -1e-10)
        if candidates.size == 0:
            return Status.OPTIMAL, iters
        j = candidates[0]
        col = T[:m, j]
        pos = np.flatnonzero(col > pivot_tol)
        if pos.size == 0:
            return Status.UNBOUNDED, iters
        ratios = T[pos, -1] / col[pos]
        best = ratios.min()
        ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
        r = ties[np.argmin(basis[ties])]
        _pivot(T, r, j)
        basis[r] = j
        iters += 1


# ---------------------------------------------------------------------------
# Ball-constrained backends


def solve_norm_constrained(prog: NormConstrainedProgram, backend: str = "clarabel",
                           tol: Tolerances = DEFAULT) -> LPResult:
    """Solve a linear program with the extra constraint ``||x[ball]|| <= 1``."""
    if backend == "clarabel":
        return _solve_clarabel(prog, tol)
    if backend == "cutting-plane":
        return _solve_cutting_plane(prog, tol)
    raise ValueError(f"unknown backend {backend!r}")


def _solve_clarabel(prog: NormConstrainedProgram, tol: Tolerances) -> LPResult:
    import clarabel

    lp = prog.lp
    n = lp.n_vars
    blocks, rhs, cones = [], [], []
    if lp.A_eq is not None and lp.A_eq.shape[0]:
        blocks.append(sp.csr_matrix(lp.A_eq))
        rhs.append(lp.b_eq)
        cones.append(clarabel.ZeroConeT(lp.A_eq.shape[0]))
    n_pos = 0
    if lp.A_ub is not None and lp.A_ub.shape[0]:
        blocks.append(sp.csr_matrix(lp.A_ub))
        rhs.append(lp.b_ub)
        n_pos += lp.A_ub.shape[0]
    nonneg = np.flatnonzero(lp.nonneg)
    if nonneg.size:
        blocks.append(sp.csr_matrix((-np.ones(nonneg.size), (np.arange(nonneg.size), nonneg)),
                                    shape=(nonneg.size, n)))
        rhs.append(np.zeros(nonneg.size))
        n_pos += nonneg.size
    if n_pos:
        cones.append(clarabel.NonnegativeConeT(n_pos))
    k = prog.ball.size
    soc = sp.csr_matrix((-np.ones(k), (np.arange(1, k + 1), prog.ball)), shape=(k + 1, n))
    blocks.append(soc)
    rhs.append(np.r_[1.0, np.zeros(k)])
    cones.append(clarabel.SecondOrderConeT(k + 1))

    A = sp.vstack(blocks).tocsc()
    b = np.concatenate(rhs)
    q = -lp.c if lp.maximize else lp.c
    P = sp.csc_matrix((n, n))
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = 1e-10
    settings.tol_gap_rel = 1e-10
    settings.tol_feas = 1e-10
    settings.max_iter = 400
    sol = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()
    status = str(sol.status)
    diag = {"backend": "clarabel", "status": status, "iterations": sol.iterations,
            "r_prim": sol.r_prim, "r_dual": sol.r_dual,
            "gap": abs(sol.obj_val - sol.obj_val_dual)}
    if status in ("Solved", "AlmostSolved"):
        x = np.asarray(sol.x)
        value = float(lp.c @ x)
        res = LPResult(Status.OPTIMAL, value, x, diag)
        res.diagnostic["residuals"] = lp.residuals(x)
        res.diagnostic["residuals"]["ball"] = float(max(0.0, np.linalg.norm(x[prog.ball]) - 1.0))
        return res
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return LPResult(Status.INFEASIBLE, diagnostic=diag)
    if status in ("DualInfeasible", "AlmostDualInfeasible"):
        return LPResult(Status.UNBOUNDED, diagnostic=diag)
    return LPResult(Status.FAILURE, diagnostic=diag)


def _solve_cutting_plane(prog: NormConstrainedProgram, tol: Tolerances,
                         max_cuts: int = 2000) -> LPResult:
    # The ball is approximated from outside by the box [-1, 1]^k plus tangent
    # cuts added at each LP optimum lying outside the ball. Near a smooth
    # optimum each cut roughly halves the angular uncertainty, so the norm
    # excess shrinks geometrically.
    lp = prog.lp
    n = lp.n_vars
    k = prog.ball.size
    base_rows = [] if lp.A_ub is None else [sp.csr_matrix(lp.A_ub)]
    base_rhs = [] if lp.A_ub is None else [lp.b_ub]
    eye = sp.csr_matrix((np.ones(k), (np.arange(k), prog.ball)), shape=(k, n))
    cuts = [eye, -eye]
    cut_rhs = [np.ones(k), np.ones(k)]
    for it in range(max_cuts):
        A_ub = sp.vstack(base_rows + cuts).tocsr()
        b_ub = np.concatenate(base_rhs + cut_rhs)
        relaxed = LinearProgram(lp.c, lp.A_eq, lp.b_eq, A_ub, b_ub, lp.nonneg, lp.maximize)
        res = solve_lp(relaxed, "highs", tol)
        if not res.optimal:
            res.diagnostic["cuts"] = it
            return res
        bvec = res.x[prog.ball]
        nrm = float(np.linalg.norm(bvec))
        # the LP itself is only feasible to ~1e-9, so demand no more than that
        if nrm <= 1.0 + 5e-9:
            res.diagnostic.update(backend="cutting-plane", cuts=it)
            res.diagnostic["residuals"] = lp.residuals(res.x)
            res.diagnostic["residuals"]["ball"] = max(0.0, nrm - 1.0)
            return res
        d = bvec / nrm
        cuts.append(sp.csr_matrix((d, (np.zeros(k, dtype=int), prog.ball)), shape=(1, n)))
        cut_rhs.append(np.ones(1))
    return LPResult(Status.FAILURE, diagnostic={"backend": "cutting-plane",
                                                "message": "cut limit reached"})
