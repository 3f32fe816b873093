"""Finite choice problems, information structures and optimal strategies.

Array conventions used throughout the package (row-major, last index fastest):

* ``utility[y, x, e, v]``: payoff of action ``y`` at covariate ``x``, taste
  ``e`` and state ``v``;
* ``prior[x, e, v]``: prior over states given ``(x, e)``;
* ``eps_pmf[x, e]``: pmf of the taste ``e`` given ``x``;
* ``signal_pmf[x, e, v, t]``: probability of signal ``t`` given ``(x, e, v)``;
* ``action_pmf[x, e, t, y]``: strategy, probability of ``y`` after ``t``;
* ``joint[x, e, y, v]``: joint pmf of (action, state) given ``(x, e)``.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionMismatch, InvalidPmf, ZeroMassSignal
from .tolerances import DEFAULT, Tolerances


def _fields_equal(a, b) -> bool:
    """Field-wise equality that compares array fields by value."""
    if type(a) is not type(b):
        return NotImplemented
    for f in fields(a):
        if not f.compare:
            continue
        x, y = getattr(a, f.name), getattr(b, f.name)
        if isinstance(x, np.ndarray) or isinstance(y, np.ndarray):
            if not np.array_equal(x, y):
                return False
        elif x != y:
            return False
    return True


@dataclass(frozen=True, eq=False)
class FiniteSupport:
    """Labelled points of a finite support. ``values`` has shape ``(n, H)``."""

    labels: tuple
    values: NDArray = None

    __eq__ = _fields_equal

    def __post_init__(self):
        labels = tuple(str(l) for l in self.labels)
        if len(labels) < 1:
            raise ValueError("a support needs at least one point")
        if len(set(labels)) != len(labels):
            raise ValueError("support labels must be unique")
        values = self.values
        if values is None:
            values = np.arange(len(labels), dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != len(labels):
            raise DimensionMismatch("one value vector per label is required")
        values.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values, labels: Sequence | None = None, fmt: str = "{:g}"):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if labels is None:
            labels = ["(" + ",".join(fmt.format(v) for v in row) + ")" if row.size > 1
                      else fmt.format(row[0]) for row in values]
            if len(set(labels)) != len(labels):
                labels = [f"p{i}" for i in range(len(values))]
        return cls(tuple(labels), values)

    @classmethod
    def named(cls, labels: Sequence):
        return cls(tuple(labels), np.arange(len(labels), dtype=float))

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        return self.labels.index(str(label))

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FiniteSupport":
        return cls(tuple(d["labels"]), np.asarray(d["values"], dtype=float))


def _check_pmf(p: NDArray, axis: int, what: str, tol: float, mask=None) -> None:
    if not np.all(np.isfinite(p)):
        raise InvalidPmf(f"{what} has non-finite entries")
    if np.any(p < -tol):
        raise InvalidPmf(f"{what} has negative entries")
    s = p.sum(axis=axis)
    dev = np.abs(s - 1.0)
    if mask is not None:
        dev = dev[mask]
    if dev.size and dev.max() > tol:
        raise InvalidPmf(f"{what} does not sum to one (max deviation {dev.max():.3g})")


@dataclass(frozen=True, eq=False)
class BaselineProblem:
    """Actions, covariates, tastes and states with utilities and priors.

    The decision maker knows ``(x, e)`` and is uncertain about ``v``; ``prior``
    and ``eps_pmf`` are the (parameter-indexed) conditional pmfs.
    """

    actions: FiniteSupport
    covariates: FiniteSupport
    eps_support: FiniteSupport
    state_support: FiniteSupport
    utility: NDArray
    prior: NDArray
    eps_pmf: NDArray
    tol: Tolerances = field(default=DEFAULT, compare=False, repr=False)

    __eq__ = _fields_equal

    def __post_init__(self):
        Y, X, E, V = (len(self.actions), len(self.covariates),
                      len(self.eps_support), len(self.state_support))
        u = np.asarray(self.utility, dtype=float)
        prior = np.asarray(self.prior, dtype=float)
        eps = np.asarray(self.eps_pmf, dtype=float)
        if u.shape != (Y, X, E, V):
            raise DimensionMismatch(f"utility shape {u.shape} != {(Y, X, E, V)}")
        if prior.shape != (X, E, V):
            raise DimensionMismatch(f"prior shape {prior.shape} != {(X, E, V)}")
        if eps.shape != (X, E):
            raise DimensionMismatch(f"eps_pmf shape {eps.shape} != {(X, E)}")
        if not np.all(np.isfinite(u)):
            raise ValueError("utility must be finite everywhere")
        _check_pmf(prior, 2, "prior", self.tol.pmf_sum)
        _check_pmf(eps, 1, "eps_pmf", self.tol.pmf_sum)
        for name, arr in (("utility", u), ("prior", prior), ("eps_pmf", eps)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.utility.shape

    def restrict_covariates(self, xs: Sequence[int]) -> "BaselineProblem":
        xs = list(xs)
        cov = FiniteSupport(tuple(self.covariates.labels[i] for i in xs),
                            self.covariates.values[xs])
        return BaselineProblem(self.actions, cov, self.eps_support, self.state_support,
                               self.utility[:, xs], self.prior[xs], self.eps_pmf[xs], self.tol)

    def to_dict(self) -> dict:
        return {
            "kind": "baseline-problem",
            "actions": self.actions.to_dict(),
            "covariates": self.covariates.to_dict(),
            "eps_support": self.eps_support.to_dict(),
            "state_support": self.state_support.to_dict(),
            "utility": _array_to_dict(self.utility, ["y", "x", "e", "v"]),
            "prior": _array_to_dict(self.prior, ["x", "e", "v"]),
            "eps_pmf": _array_to_dict(self.eps_pmf, ["x", "e"]),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BaselineProblem":
        return cls(FiniteSupport.from_dict(d["actions"]),
                   FiniteSupport.from_dict(d["covariates"]),
                   FiniteSupport.from_dict(d["eps_support"]),
                   FiniteSupport.from_dict(d["state_support"]),
                   _array_from_dict(d["utility"]), _array_from_dict(d["prior"]),
                   _array_from_dict(d["eps_pmf"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "BaselineProblem":
        return cls.from_dict(json.loads(text))


def _array_to_dict(a: NDArray, dims: list[str]) -> dict:
    # flat row-major storage: the last listed dimension varies fastest
    return {"dims": dims, "shape": list(a.shape), "data": np.asarray(a).ravel().tolist()}


def _array_from_dict(d: dict) -> NDArray:
    return np.asarray(d["data"], dtype=float).reshape(d["shape"])


@dataclass(frozen=True, eq=False)
class InformationStructure:
    """Signal support and ``signal_pmf[x, e, v, t]``."""

    signal_support: FiniteSupport
    signal_pmf: NDArray
    tol: Tolerances = field(default=DEFAULT, compare=False, repr=False)

    __eq__ = _fields_equal

    def __post_init__(self):
        s = np.asarray(self.signal_pmf, dtype=float)
        if s.ndim != 4 or s.shape[3] != len(self.signal_support):
            raise DimensionMismatch("signal_pmf must be [x, e, v, t] with |T| signals")
        _check_pmf(s, 3, "signal_pmf", self.tol.pmf_sum)
        s.setflags(write=False)
        object.__setattr__(self, "signal_pmf", s)

    def check_against(self, problem: BaselineProblem) -> None:
        _, X, E, V = problem.shape
        if self.signal_pmf.shape[:3] != (X, E, V):
            raise DimensionMismatch("information structure does not match the problem")

    def to_dict(self) -> dict:
        return {"kind": "information-structure",
                "signal_support": self.signal_support.to_dict(),
                "signal_pmf": _array_to_dict(self.signal_pmf, ["x", "e", "v", "t"])}

    @classmethod
    def from_dict(cls, d: dict) -> "InformationStructure":
        return cls(FiniteSupport.from_dict(d["signal_support"]),
                   _array_from_dict(d["signal_pmf"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "InformationStructure":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Strategy:
    """``action_pmf[x, e, t, y]``; rows of signals with zero mass are inactive.

    Inactive rows are all zeros and carry no meaning.
    """

    action_pmf: NDArray
    active: NDArray
    tol: Tolerances = field(default=DEFAULT, compare=False, repr=False)

    def __post_init__(self):
        a = np.asarray(self.action_pmf, dtype=float)
        act = np.asarray(self.active, dtype=bool)
        if a.ndim != 4 or act.shape != a.shape[:3]:
            raise DimensionMismatch("strategy must be [x, e, t, y] with an [x, e, t] mask")
        _check_pmf(a, 3, "strategy", self.tol.pmf_sum, mask=act)
        a.setflags(write=False)
        act.setflags(write=False)
        object.__setattr__(self, "action_pmf", a)
        object.__setattr__(self, "active", act)


@dataclass(frozen=True)
class BCEJoint:
    """Joint pmf of (action, state) per ``(x, e)``, indexed ``[x, e, y, v]``."""

    joint: NDArray

    def __post_init__(self):
        j = np.asarray(self.joint, dtype=float)
        if j.ndim != 4:
            raise DimensionMismatch("joint must be indexed [x, e, y, v]")
        object.__setattr__(self, "joint", j)

    def choice_probs(self, problem: BaselineProblem) -> NDArray:
        """Predicted ``P(y | x)``, shape ``[x, y]``."""
        return np.einsum("xeyv,xe->xy", self.joint, problem.eps_pmf)


@dataclass(frozen=True)
class ParameterPoint:
    """Utility, prior and taste-density parameters of a model family."""

    theta_u: NDArray = field(default_factory=lambda: np.zeros(0))
    theta_V: NDArray = field(default_factory=lambda: np.zeros(0))
    theta_eps: NDArray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name in ("theta_u", "theta_V", "theta_eps"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), float)))

    def as_vector(self) -> NDArray:
        return np.concatenate([self.theta_u, self.theta_V, self.theta_eps])


class TieRule(str, enum.Enum):
    UNIFORM = "uniform"
    FIRST_INDEX = "first-index"


# ---------------------------------------------------------------------------
# Standard information structures


def complete_information(problem: BaselineProblem) -> InformationStructure:
    """The signal reveals the state: ``T = V`` and ``t = v``."""
    _, X, E, V = problem.shape
    pmf = np.broadcast_to(np.eye(V), (X, E, V, V))
    return InformationStructure(problem.state_support, np.array(pmf))


def degenerate_information(problem: BaselineProblem) -> InformationStructure:
    """A single uninformative signal."""
    _, X, E, V = problem.shape
    return InformationStructure(FiniteSupport(("0",)), np.ones((X, E, V, 1)))


def interval_information(problem: BaselineProblem, component: int,
                         lo: float, hi: float) -> InformationStructure:
    """Signal ``"in"`` when component ``component`` of the state lies in ``[lo, hi]``."""
    _, X, E, V = problem.shape
    vals = problem.state_support.values[:, component]
    inside = ((vals >= lo) & (vals <= hi)).astype(float)
    pmf = np.stack([inside, 1.0 - inside], axis=-1)
    return InformationStructure(FiniteSupport(("in", "out")),
                                np.array(np.broadcast_to(pmf, (X, E, V, 2))))


# ---------------------------------------------------------------------------
# Bayesian updating and optimal behaviour


def posterior(problem: BaselineProblem, info: InformationStructure,
              x: int, e: int, t: int) -> NDArray:
    """Posterior over states after signal ``t`` at ``(x, e)``.

    Raises :class:`ZeroMassSignal` when the signal cannot occur under the prior.
    """
    info.check_against(problem)
    w = info.signal_pmf[x, e, :, t] * problem.prior[x, e]
    mass = w.sum()
    if mass <= 0.0:
        raise ZeroMassSignal(f"signal {t} has zero probability at (x={x}, e={e})")
    return w / mass


def signal_weights(problem: BaselineProblem, info: InformationStructure) -> NDArray:
    """Unnormalised posteriors ``P(t | v) P(v)`` indexed ``[x, e, t, v]``."""
    info.check_against(problem)
    return np.einsum("xevt,xev->xetv", info.signal_pmf, problem.prior)


def argmax_pmf(values: NDArray, tie_break: TieRule = TieRule.UNIFORM,
               tol: Tolerances = DEFAULT) -> NDArray:
    """Pmf over the last axis putting mass on (near-)maximisers of ``values``."""
    top = values.max(axis=-1, keepdims=True)
    slack = tol.argmax_rel * np.maximum(1.0, np.abs(top))
    best = values >= top - slack
    if tie_break is TieRule.FIRST_INDEX:
        first = np.argmax(best, axis=-1)
        out = np.zeros(values.shape)
        np.put_along_axis(out, first[..., None], 1.0, axis=-1)
        return out
    if tie_break is TieRule.UNIFORM:
        return best / best.sum(axis=-1, keepdims=True)
    raise ValueError(f"unknown tie rule {tie_break!r}")


def optimal_strategy(problem: BaselineProblem, info: InformationStructure,
                     tie_break: TieRule = TieRule.UNIFORM) -> Strategy:
    """Optimal strategy of the problem augmented with ``info``.

    For every signal with positive mass the strategy mixes over the actions
    maximising posterior expected utility. Signals that cannot occur are
    marked inactive.
    """
    w = signal_weights(problem, info)
    mass = w.sum(axis=-1)
    active = mass > 0.0
    # expected utility up to the positive factor ``mass``
    eu = np.einsum("xetv,yxev->xety", w, problem.utility)
    eu = np.divide(eu, mass[..., None], out=np.zeros_like(eu), where=active[..., None])
    pmf = argmax_pmf(eu, tie_break, problem.tol)
    pmf[~active] = 0.0
    return Strategy(pmf, active)


def optimality_gap(problem: BaselineProblem, info: InformationStructure,
                   strategy: Strategy) -> float:
    """Largest relative shortfall of a chosen action from the posterior optimum.

    Zero (up to rounding) certifies that the strategy only mixes over
    maximisers of posterior expected utility at every signal with mass.
    """
    w = signal_weights(problem, info)
    mass = w.sum(axis=-1)
    active = mass > 0.0
    eu = np.einsum("xetv,yxev->xety", w, problem.utility)
    eu = np.divide(eu, mass[..., None], out=np.zeros_like(eu), where=active[..., None])
    top = eu.max(axis=-1, keepdims=True)
    short = (top - eu) / np.maximum(1.0, np.abs(top))
    chosen = (strategy.action_pmf > 0.0) & active[..., None]
    return float(short[chosen].max()) if chosen.any() else 0.0


def induced_joint(problem: BaselineProblem, info: InformationStructure,
                  strategy: Strategy) -> BCEJoint:
    """Joint of (action, state) induced by an information structure and strategy."""
    w = signal_weights(problem, info)
    if strategy.action_pmf.shape[:3] != w.shape[:3]:
        raise DimensionMismatch("strategy does not match the information structure")
    if strategy.action_pmf.shape[3] != len(problem.actions):
        raise DimensionMismatch("strategy has the wrong number of actions")
    return BCEJoint(np.einsum("xety,xetv->xeyv", strategy.action_pmf, w))


def consideration_set(problem: BaselineProblem, info: InformationStructure,
                      strategy: Strategy, x: int, e: int) -> list[int]:
    """Indices of actions chosen with positive probability at ``(x, e)``."""
    w = signal_weights(problem, info)[x, e]          # [t, v]
    signal_mass = w.sum(axis=-1)                     # [t]
    total = strategy.action_pmf[x, e].T @ signal_mass
    return [int(y) for y in np.flatnonzero(total > 0.0)]


def choice_probabilities(problem: BaselineProblem, info: InformationStructure,
                         tie_break: TieRule = TieRule.UNIFORM) -> NDArray:
    """``P(y | x)`` under the optimal strategy, shape ``[x, y]``."""
    joint = induced_joint(problem, info, optimal_strategy(problem, info, tie_break))
    return joint.choice_probs(problem)


def complete_info_choice_probs(problem: BaselineProblem,
                               tie_break: TieRule = TieRule.UNIFORM) -> NDArray:
    """Shortcut for :func:`choice_probabilities` under complete information."""
    u = np.moveaxis(problem.utility, 0, -1)          # [x, e, v, y]
    pick = argmax_pmf(u, tie_break, problem.tol)
    return np.einsum("xevy,xev,xe->xy", pick, problem.prior, problem.eps_pmf)


def degenerate_info_choice_probs(problem: BaselineProblem,
                                 tie_break: TieRule = TieRule.UNIFORM) -> NDArray:
    """Shortcut for :func:`choice_probabilities` under degenerate information."""
    eu = np.einsum("yxev,xev->xey", problem.utility, problem.prior)
    pick = argmax_pmf(eu, tie_break, problem.tol)
    return np.einsum("xey,xe->xy", pick, problem.eps_pmf)
