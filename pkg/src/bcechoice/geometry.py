"""Convex-geometry helpers for the predicted choice-probability sets.

The sets involved are low-dimensional polytopes known only through a linear
maximisation oracle. Two tools cover every need downstream:

* Wolfe's minimum-norm-point method, which finds the point of a polytope
  closest to a target using only the oracle;
* :func:`polytope_from_oracle`, which recovers the exact vertex list by
  certifying every facet of a growing inner hull with one oracle call.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import null_space
from scipy.spatial import ConvexHull, QhullError

Oracle = Callable[[NDArray], NDArray]
"""Maps a direction ``d`` to a point of the set maximising ``d @ p``."""


@dataclass(frozen=True)
class MinNormResult:
    point: NDArray
    weights: NDArray
    atoms: NDArray
    iterations: int
    gap: float

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.point))


def _affine_minimizer(S: NDArray) -> NDArray:
    """Weights ``a`` (summing to one) minimising ``|a @ S|``."""
    k = S.shape[0]
    G = S @ S.T
    M = np.zeros((k + 1, k + 1))
    M[:k, :k] = G
    M[:k, k] = 1.0
    M[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
    a = sol[:k]
    return a / a.sum()


def min_norm_point(oracle: Oracle, start: NDArray, tol: float = 1e-12,
                   max_iter: int = 500) -> MinNormResult:
    """Point of minimum Euclidean norm in the convex hull of the oracle's range.

    ``oracle(d)`` must return a point maximising ``d @ p``; the method asks
    for the minimiser of ``x @ p`` by passing ``-x``. Stops when the Frank-Wolfe
    gap ``|x|^2 - min_p x @ p`` falls below ``tol * max(1, |x|^2)``.
    """
    S = np.atleast_2d(np.asarray(start, dtype=float))
    lam = np.ones(1)
    x = S[0].copy()
    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        q = np.asarray(oracle(-x), dtype=float)
        gap = float(x @ x - x @ q)
        if gap <= tol * max(1.0, x @ x):
            break
        if np.any(np.all(np.abs(S - q) <= 1e-15, axis=1)):
            # oracle returned an atom already in use: x is optimal up to rounding
            break
        S = np.vstack([S, q])
        lam = np.append(lam, 0.0)
        while True:
            a = _affine_minimizer(S)
            if np.all(a > 1e-14):
                lam = a
                break
            neg = a <= 1e-14
            ratio = lam[neg] / np.maximum(lam[neg] - a[neg], 1e-300)
            step = float(np.clip(ratio.min(), 0.0, 1.0))
            lam = step * a + (1.0 - step) * lam
            keep = lam > 1e-14
            if keep.all():
                keep[np.argmin(lam)] = False
            S, lam = S[keep], lam[keep] / lam[keep].sum()
        x = lam @ S
    return MinNormResult(x, lam, S, it, max(gap, 0.0))


def finite_oracle(points: NDArray) -> Oracle:
    pts = np.atleast_2d(np.asarray(points, dtype=float))

    def support(d: NDArray) -> NDArray:
        return pts[int(np.argmax(pts @ d))]

    return support


def distance_to_hull(target: NDArray, points: NDArray, tol: float = 1e-14) -> float:
    """Euclidean distance from ``target`` to the convex hull of ``points``."""
    shifted = np.atleast_2d(np.asarray(points, float)) - np.asarray(target, float)
    if shifted.shape[1] == 0:
        return 0.0
    start = shifted[int(np.argmin(np.einsum("ij,ij->i", shifted, shifted)))]
    return min_norm_point(finite_oracle(shifted), start, tol).norm


def distance_via_oracle(target: NDArray, oracle: Oracle, tol: float = 1e-12,
                        max_iter: int = 500) -> MinNormResult:
    """Closest point of the oracle's set to ``target``, shifted so ``target`` is 0."""
    target = np.asarray(target, dtype=float)

    def shifted(d: NDArray) -> NDArray:
        return np.asarray(oracle(d), float) - target

    return min_norm_point(shifted, shifted(-target), tol, max_iter)


# ---------------------------------------------------------------------------
# Exact recovery of a polytope from its support function


@dataclass(frozen=True)
class Polytope:
    """Vertex list of a polytope together with its affine hull.

    ``origin + basis @ local`` parametrises the affine hull (``basis`` has
    orthonormal columns); ``vertices`` are in ambient coordinates.
    """

    vertices: NDArray
    origin: NDArray
    basis: NDArray
    oracle_calls: int = 0

    @property
    def dimension(self) -> int:
        return self.basis.shape[1]

    def distance(self, target: NDArray) -> float:
        return distance_to_hull(target, self.vertices)

    def farthest(self, target: NDArray, scale: float) -> float:
        """``max_q |target - scale * q|`` over the polytope (attained at a vertex)."""
        diff = np.asarray(target, float)[None, :] - scale * self.vertices
        return float(np.sqrt(np.einsum("ij,ij->i", diff, diff).max()))

    def contains(self, point: NDArray, tol: float = 1e-9) -> bool:
        return self.distance(point) <= tol


def _dedupe(points: list, tol: float) -> NDArray:
    out: list = []
    for p in points:
        if all(np.max(np.abs(p - q)) > tol for q in out):
            out.append(p)
    return np.asarray(out)


def polytope_from_oracle(oracle: Oracle, dim: int, tol: float = 1e-9,
                         max_calls: int = 5000) -> Polytope:
    """Exact vertices of the polytope whose support oracle is ``oracle``.

    First the affine hull is found by probing directions orthogonal to the
    span found so far. Inside it an inner hull is grown: every facet normal is
    queried, and a facet is accepted once the oracle cannot push past it by
    more than ``tol``; otherwise the witness becomes a new hull point. The
    result is exact up to the oracle's accuracy.
    """
    calls = 0

    def query(d: NDArray) -> NDArray:
        nonlocal calls
        calls += 1
        if calls > max_calls:
            raise RuntimeError("polytope recovery exceeded its oracle budget")
        return np.asarray(oracle(d), dtype=float)

    first = query(np.ones(dim) / np.sqrt(dim))
    points = [first]
    span = np.zeros((dim, 0))
    # affine hull: probe the orthogonal complement of the span until it is flat
    while span.shape[1] < dim:
        comp = null_space(span.T) if span.shape[1] else np.eye(dim)
        grew = False
        for d in comp.T:
            hi, lo = query(d), query(-d)
            points += [hi, lo]
            if d @ (hi - lo) > tol:
                step = hi - lo
                step -= span @ (span.T @ step)
                span = np.column_stack([span, step / np.linalg.norm(step)])
                grew = True
                break
        if not grew:
            break
    origin = first
    r = span.shape[1]
    if r == 0:
        return Polytope(first[None, :], origin, span, calls)

    def local(p):
        return (np.asarray(p) - origin) @ span

    if r == 1:
        d = span[:, 0]
        ends = _dedupe([query(d), query(-d)], tol)
        return Polytope(ends, origin, span, calls)

    pts = _dedupe(points, tol)
    # make sure the seed set is full-dimensional inside the hull
    for d in np.vstack([span.T, -span.T]):
        pts = _dedupe(list(pts) + [query(d)], tol)
    certified: set = set()
    while True:
        loc = local(pts)
        try:
            hull = ConvexHull(loc)
        except QhullError:
            hull = ConvexHull(loc, qhull_options="QJ")
        added = False
        for eq in hull.equations:
            normal, offset = eq[:-1], -eq[-1]
            key = tuple(np.round(np.r_[normal, offset], 9))
            if key in certified:
                continue
            w = query(span @ normal)
            if normal @ local(w) > offset + tol:
                if all(np.max(np.abs(w - q)) > tol for q in pts):
                    pts = np.vstack([pts, w])
                    added = True
                    continue
            certified.add(key)
        if not added:
            break
    verts = pts[ConvexHull(local(pts)).vertices]
    return Polytope(verts, origin, span, calls)


def hull_of_points(points: NDArray, tol: float = 1e-10) -> Polytope:
    """Vertex list of the convex hull of a finite point cloud of any dimension."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    origin = pts.mean(axis=0)
    centered = pts - origin
    if centered.size == 0 or np.abs(centered).max() <= tol:
        return Polytope(pts[:1].copy(), pts[0].copy(), np.zeros((pts.shape[1], 0)))
    _, sing, vt = np.linalg.svd(centered, full_matrices=False)
    r = int(np.sum(sing > tol * max(1.0, sing[0])))
    basis = vt[:r].T
    loc = centered @ basis
    if r == 1:
        keep = [int(np.argmin(loc[:, 0])), int(np.argmax(loc[:, 0]))]
        return Polytope(pts[keep], origin, basis)
    try:
        hull = ConvexHull(loc)
    except QhullError:
        hull = ConvexHull(loc, qhull_options="QJ")
    return Polytope(pts[np.sort(hull.vertices)], origin, basis)


def minkowski_sum(polytopes: list, weights: NDArray | None = None) -> Polytope:
    """Vertices of ``sum_k weights[k] * P_k``; pruned to the hull after each term."""
    weights = np.ones(len(polytopes)) if weights is None else np.asarray(weights, float)
    acc = None
    for w, P in zip(weights, polytopes):
        term = w * P.vertices
        acc = term if acc is None else (acc[:, None, :] + term[None, :, :]).reshape(-1, term.shape[1])
        acc = hull_of_points(acc).vertices
    return hull_of_points(acc)
