"""Finite grids and pmfs for continuous taste and state distributions.

A pmf on a grid is the density at the grid points renormalised to sum to
one. Grids are given explicitly, as equally spaced values, or as equally
spaced quantiles of the family's own distribution.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import integrate, optimize, stats

from .errors import AllZeroMass, GridTooLarge
from .model import FiniteSupport

FAMILIES = ("normal", "gumbel", "cardell-nested", "beta-truncated", "custom")
DEFAULT_GRID_CAP = 10**6


# ---------------------------------------------------------------------------
# Positive stable law with Laplace transform exp(-s**alpha)


def _zolotarev_kernel(u: NDArray, alpha: float) -> NDArray:
    s_a = np.sin(alpha * u)
    return (s_a / np.sin(u)) ** (1.0 / (1.0 - alpha)) * np.sin((1.0 - alpha) * u) / s_a


def positive_stable_cdf(x: float, alpha: float) -> float:
    """CDF of the positive stable law with ``E exp(-sS) = exp(-s**alpha)``."""
    if x <= 0.0:
        return 0.0
    power = x ** (-alpha / (1.0 - alpha))

    def integrand(u):
        return np.exp(-power * _zolotarev_kernel(u, alpha))

    val, _ = integrate.quad(integrand, 0.0, np.pi, limit=200, epsabs=1e-13, epsrel=1e-11)
    return float(np.clip(val / np.pi, 0.0, 1.0))


def positive_stable_pdf(x: float, alpha: float) -> float:
    """Density of the positive stable law, by differentiating the integral CDF."""
    if x <= 0.0:
        return 0.0
    k = alpha / (1.0 - alpha)
    power = x ** (-k)

    def integrand(u):
        a = _zolotarev_kernel(u, alpha)
        return a * np.exp(-power * a)

    val, _ = integrate.quad(integrand, 0.0, np.pi, limit=200, epsabs=1e-300, epsrel=1e-11)
    return float(k * power / x * val / np.pi)


def positive_stable_ppf(q: float, alpha: float) -> float:
    if not 0.0 < q < 1.0:
        raise ValueError("quantile level must lie in (0, 1)")

    def f(logx):
        return positive_stable_cdf(np.exp(logx), alpha) - q

    lo, hi = -1.0, 1.0
    while f(lo) > 0.0:
        lo *= 2.0
    while f(hi) < 0.0:
        hi *= 2.0
    return float(np.exp(optimize.brentq(f, lo, hi, xtol=1e-12)))


def positive_stable_rvs(alpha: float, size, rng: np.random.Generator) -> NDArray:
    """Kanter's representation of the positive stable law."""
    u = rng.uniform(0.0, np.pi, size)
    e = rng.exponential(1.0, size)
    return (np.sin(alpha * u) / np.sin(u) ** (1.0 / alpha)
            * (np.sin((1.0 - alpha) * u) / e) ** ((1.0 - alpha) / alpha))


# ---------------------------------------------------------------------------
# Families


@dataclass(frozen=True)
class ContinuousFamily:
    """A univariate distribution family with its parameters.

    ``normal``: (mean, sd). ``gumbel``: (location, scale).
    ``cardell-nested``: (lambda,), the positive stable mixing variable ``S``
    whose log, scaled by lambda, is the nest-level taste of the nested logit.
    ``beta-truncated``: (shape1, shape2) restricted to ``bounds``.
    ``custom``: ``density`` callback, optional ``quantile`` callback.
    """

    family: str
    params: tuple = ()
    bounds: tuple = (-np.inf, np.inf)
    density: Callable | None = field(default=None, compare=False)
    quantile: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        p = tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", p)
        if self.family == "normal" and (len(p) != 2 or p[1] <= 0):
            raise ValueError("normal needs (mean, sd > 0)")
        if self.family == "gumbel" and (len(p) != 2 or p[1] <= 0):
            raise ValueError("gumbel needs (location, scale > 0)")
        if self.family == "cardell-nested" and (len(p) != 1 or not 0.0 < p[0] < 1.0):
            raise ValueError("cardell-nested needs lambda in (0, 1)")
        if self.family == "beta-truncated":
            if len(p) != 2 or min(p) <= 0:
                raise ValueError("beta-truncated needs shapes > 0")
            if self.bounds == (-np.inf, np.inf):
                object.__setattr__(self, "bounds", (0.0, 1.0))
        if self.family == "custom" and self.density is None:
            raise ValueError("custom family needs a density callback")

    def pdf(self, x) -> NDArray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.bounds
        inside = (x >= lo) & (x <= hi)
        f = self.family
        if f == "normal":
            out = stats.norm.pdf(x, *self.params)
        elif f == "gumbel":
            out = stats.gumbel_r.pdf(x, *self.params)
        elif f == "cardell-nested":
            out = np.vectorize(lambda v: positive_stable_pdf(v, self.params[0]))(x)
        elif f == "beta-truncated":
            with np.errstate(divide="ignore"):
                out = stats.beta.pdf(x, *self.params)
            a, b = self.params
            # mark poles at the endpoints explicitly
            out = np.where((x == 0.0) & (a < 1.0), np.inf, out)
            out = np.where((x == 1.0) & (b < 1.0), np.inf, out)
        else:
            out = np.asarray(self.density(x), dtype=float)
        return np.where(inside, out, 0.0)

    def ppf(self, q) -> NDArray:
        q = np.asarray(q, dtype=float)
        f = self.family
        if f == "normal":
            return stats.norm.ppf(q, *self.params)
        if f == "gumbel":
            return stats.gumbel_r.ppf(q, *self.params)
        if f == "cardell-nested":
            return np.vectorize(lambda p: positive_stable_ppf(p, self.params[0]))(q)
        if f == "beta-truncated":
            lo, hi = self.bounds
            dist = stats.beta(*self.params)
            c_lo, c_hi = dist.cdf(max(lo, 0.0)), dist.cdf(min(hi, 1.0))
            return dist.ppf(c_lo + q * (c_hi - c_lo))
        if self.quantile is None:
            raise ValueError("custom family has no quantile callback")
        return np.asarray(self.quantile(q), dtype=float)

    def rvs(self, size, rng: np.random.Generator) -> NDArray:
        f = self.family
        if f == "normal":
            return rng.normal(self.params[0], self.params[1], size)
        if f == "gumbel":
            return rng.gumbel(self.params[0], self.params[1], size)
        if f == "cardell-nested":
            return positive_stable_rvs(self.params[0], size, rng)
        return self.ppf(rng.uniform(0.0, 1.0, size))

    def to_dict(self) -> dict:
        if self.family == "custom":
            raise ValueError("custom families cannot be serialised")
        return {"family": self.family, "params": list(self.params),
                "bounds": [float(b) for b in self.bounds]}


# ---------------------------------------------------------------------------
# Grids


@dataclass(frozen=True)
class GridSpec:
    """How to place the points of one grid dimension.

    ``mode="explicit"`` uses ``points``; ``"values"`` puts ``count`` equally
    spaced points on ``[lo, hi]``; ``"quantiles"`` puts them at equally spaced
    quantile levels in ``[lo, hi]`` (default 0.001 to 0.999) of a family.
    """

    mode: str
    count: int = 0
    lo: float | None = None
    hi: float | None = None
    points: tuple = ()

    def __post_init__(self):
        if self.mode not in ("explicit", "values", "quantiles"):
            raise ValueError(f"unknown grid mode {self.mode!r}")
        if self.mode == "explicit":
            if len(self.points) < 1:
                raise ValueError("explicit grid needs at least one point")
            object.__setattr__(self, "points", tuple(float(p) for p in self.points))
            return
        if self.count < 2:
            raise ValueError("generated grids need at least two points")
        if self.mode == "quantiles":
            lo = 0.001 if self.lo is None else self.lo
            hi = 0.999 if self.hi is None else self.hi
            if not 0.0 < lo < hi < 1.0:
                raise ValueError("quantile bounds must satisfy 0 < lo < hi < 1")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
        elif self.lo is None or self.hi is None or not self.lo < self.hi:
            raise ValueError("value grids need lo < hi")

    @classmethod
    def explicit(cls, points: Sequence[float]) -> "GridSpec":
        return cls("explicit", points=tuple(points))

    @classmethod
    def values(cls, lo: float, hi: float, count: int) -> "GridSpec":
        return cls("values", count=count, lo=lo, hi=hi)

    @classmethod
    def quantiles(cls, count: int, lo: float = 0.001, hi: float = 0.999) -> "GridSpec":
        return cls("quantiles", count=count, lo=lo, hi=hi)

    def grid_points(self, family: ContinuousFamily | None = None) -> NDArray:
        if self.mode == "explicit":
            return np.asarray(self.points)
        if self.mode == "values":
            return np.linspace(self.lo, self.hi, self.count)
        if family is None:
            raise ValueError("quantile grids need a distribution family")
        return np.asarray(family.ppf(np.linspace(self.lo, self.hi, self.count)), float)

    def to_dict(self) -> dict:
        if self.mode == "explicit":
            return {"mode": "explicit", "points": list(self.points)}
        return {"mode": self.mode, "count": self.count, "lo": self.lo, "hi": self.hi}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        if d["mode"] == "explicit":
            return cls.explicit(d["points"])
        return cls(d["mode"], count=int(d["count"]), lo=d.get("lo"), hi=d.get("hi"))


def density_to_pmf(density: NDArray) -> NDArray:
    """Renormalise density values at grid points into a pmf.

    Points where the density is infinite (a pole at a support endpoint)
    share all the mass equally.
    """
    f = np.asarray(density, dtype=float)
    if np.any(np.isnan(f)) or np.any(f < 0):
        raise ValueError("density values must be nonnegative numbers")
    poles = np.isinf(f)
    if poles.any():
        return poles / poles.sum()
    total = f.sum()
    if total <= 0.0:
        raise AllZeroMass("density vanishes at every grid point")
    return f / total


def discretize_pmf(spec: ContinuousFamily, grid: GridSpec,
                   label_fmt: str = "{:.6g}") -> tuple[FiniteSupport, NDArray]:
    """Grid support and the renormalised density pmf on it."""
    pts = grid.grid_points(spec)
    pmf = density_to_pmf(spec.pdf(pts))
    return FiniteSupport.from_values(pts, fmt=label_fmt), pmf


def product_grid(dims: Sequence, cap: int = DEFAULT_GRID_CAP,
                 label_fmt: str = "{:.6g}") -> FiniteSupport:
    """Cartesian product of one-dimensional grids, last dimension fastest.

    Each entry of ``dims`` is an array of points, a :class:`FiniteSupport`
    with scalar values, or a ``(GridSpec, family)`` pair.
    """
    axes = []
    for d in dims:
        if isinstance(d, FiniteSupport):
            axes.append(np.asarray(d.values)[:, 0])
        elif isinstance(d, tuple) and len(d) == 2 and isinstance(d[0], GridSpec):
            axes.append(d[0].grid_points(d[1]))
        elif isinstance(d, GridSpec):
            axes.append(d.grid_points())
        else:
            axes.append(np.asarray(d, dtype=float).ravel())
    size = int(np.prod([len(a) for a in axes]))
    if size > cap:
        raise GridTooLarge(f"product grid has {size} points (cap {cap})")
    values = np.array(list(itertools.product(*axes)), dtype=float).reshape(size, len(axes))
    labels = tuple("(" + ",".join(label_fmt.format(v) for v in row) + ")" for row in values)
    return FiniteSupport(labels, values)


def product_pmf(pmfs: Sequence[NDArray]) -> NDArray:
    """Independent product of marginal pmfs in :func:`product_grid` order."""
    out = np.ones(1)
    for p in pmfs:
        out = np.multiply.outer(out, np.asarray(p, float)).ravel()
    return out
