"""Model families, information mixtures, simulation and the named presets.

A model family maps a parameter vector to a discretised
:class:`BaselineProblem`. Three families are provided: a nested logit with
one nest of inside goods, a CARA insurance-choice model and a spatial
voting model with abstention. A :class:`PopulationInfoMix` says which share
of decision makers processes which information structure; from it we get
exact population choice probabilities or simulated samples.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .discretize import (ContinuousFamily, GridSpec, density_to_pmf, discretize_pmf,
                         product_grid, product_pmf)
from .model import (BaselineProblem, FiniteSupport, InformationStructure, ParameterPoint,
                    TieRule, complete_information, degenerate_information, induced_joint,
                    interval_information, optimal_strategy)

EULER_GAMMA = float(np.euler_gamma)
SIM_CHUNK = 10_000


# ---------------------------------------------------------------------------
# Information mixtures


@dataclass(frozen=True)
class InfoComponent:
    """One information type: ``complete``, ``degenerate``, ``interval`` or ``eta-reveal``.

    ``interval`` takes ``{"component", "lo", "hi"}`` options; ``eta-reveal``
    is specific to the insurance family.
    """

    weight: float
    kind: str
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"weight": self.weight, "kind": self.kind, "options": dict(self.options)}


@dataclass(frozen=True)
class PopulationInfoMix:
    components: tuple

    def __post_init__(self):
        comps = tuple(c if isinstance(c, InfoComponent) else InfoComponent(*c)
                      for c in self.components)
        w = np.array([c.weight for c in comps], dtype=float)
        if len(comps) == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to one")
        object.__setattr__(self, "components", comps)

    @classmethod
    def of(cls, **weights: float) -> "PopulationInfoMix":
        return cls(tuple(InfoComponent(w, k) for k, w in weights.items()))

    @property
    def weights(self) -> NDArray:
        return np.array([c.weight for c in self.components])

    def to_dict(self) -> dict:
        return {"components": [c.to_dict() for c in self.components]}

    @classmethod
    def from_dict(cls, d: dict) -> "PopulationInfoMix":
        return cls(tuple(InfoComponent(c["weight"], c["kind"], c.get("options", {}))
                         for c in d["components"]))


# ---------------------------------------------------------------------------
# Families


class ModelFamily:
    """Parameter vector -> discretised baseline problem."""

    name: str = "family"
    param_names: tuple = ()

    def problem(self, theta) -> BaselineProblem:
        raise NotImplementedError

    @property
    def covariate_pmf(self) -> NDArray:
        raise NotImplementedError

    def parameter_point(self, theta) -> ParameterPoint:
        return ParameterPoint(theta_u=np.asarray(theta, float))

    def information(self, problem: BaselineProblem, theta,
                    component: InfoComponent) -> InformationStructure:
        if component.kind == "complete":
            return complete_information(problem)
        if component.kind == "degenerate":
            return degenerate_information(problem)
        if component.kind == "interval":
            o = component.options
            return interval_information(problem, int(o["component"]), o["lo"], o["hi"])
        raise ValueError(f"{self.name} does not provide {component.kind!r} information")

    def describe(self) -> dict:
        return {"family": self.name, "parameters": list(self.param_names)}


def _covariate_support(values: NDArray) -> FiniteSupport:
    return FiniteSupport.from_values(np.asarray(values, float).reshape(len(values), -1))


@lru_cache(maxsize=256)
def _stable_pmf(lam: float, points: tuple) -> NDArray:
    fam = ContinuousFamily("cardell-nested", (lam,))
    return density_to_pmf(fam.pdf(np.asarray(points)))


@dataclass(frozen=True, eq=False)
class NestedLogit(ModelFamily):
    """Nested logit with the outside option alone and one nest of inside goods.

    Utility of inside good ``y`` is ``beta @ z[x, y] + lambda*log(S) +
    lambda*eta_y`` and of the outside good ``eta_0``. The taste ``e = S`` is
    positive stable with index lambda and the state is ``v = (eta_0, ...,
    eta_{L-1})`` with independent standard Gumbel components, so that
    ``lambda*log(S) + lambda*eta_y`` is standard Gumbel with the nested
    logit joint law. ``theta = (beta_1, ..., beta_M, lambda)``.
    """

    n_alternatives: int
    covariates: NDArray                  # [X, L-1] or [X, L-1, M]
    x_pmf: NDArray
    s_grid: GridSpec
    eta_grid: GridSpec
    name: str = "nested-logit"

    def __post_init__(self):
        z = np.asarray(self.covariates, float)
        if z.ndim == 2:
            z = z[..., None]
        if z.shape[1] != self.n_alternatives - 1:
            raise ValueError("covariates need one column per inside good")
        object.__setattr__(self, "covariates", z)
        p = np.asarray(self.x_pmf, float)
        object.__setattr__(self, "x_pmf", p / p.sum())

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[2]

    @property
    def param_names(self) -> tuple:
        m = self.n_covariates
        betas = ("beta",) if m == 1 else tuple(f"beta{k + 1}" for k in range(m))
        return betas + ("lambda",)

    @property
    def covariate_pmf(self) -> NDArray:
        return self.x_pmf

    def split(self, theta) -> tuple[NDArray, float]:
        theta = np.asarray(theta, float)
        lam = float(theta[-1])
        if not 0.0 < lam < 1.0:
            raise ValueError("lambda must lie in (0, 1)")
        return theta[:-1], lam

    def parameter_point(self, theta) -> ParameterPoint:
        beta, lam = self.split(theta)
        return ParameterPoint(theta_u=np.r_[beta, lam], theta_eps=[lam])

    def _supports(self):
        gumbel = ContinuousFamily("gumbel", (0.0, 1.0))
        eta_pts = self.eta_grid.grid_points(gumbel)
        eta_pmf = density_to_pmf(gumbel.pdf(eta_pts))
        L = self.n_alternatives
        states = product_grid([eta_pts] * L)
        prior = product_pmf([eta_pmf] * L)
        s_pts = None if self.s_grid.mode == "quantiles" else self.s_grid.grid_points()
        return states, prior, s_pts

    def problem(self, theta) -> BaselineProblem:
        beta, lam = self.split(theta)
        states, prior_v, s_pts = self._supports()
        if s_pts is None:   # quantile grids depend on lambda
            s_pts = self.s_grid.grid_points(ContinuousFamily("cardell-nested", (lam,)))
        eps_pmf = _stable_pmf(lam, tuple(np.round(s_pts, 14)))
        L, X, E = self.n_alternatives, len(self.x_pmf), len(s_pts)
        eta = states.values                                    # [V, L]
        mean = self.covariates @ beta                           # [X, L-1]
        u = np.empty((L, X, E, len(states)))
        u[0] = eta[None, None, :, 0]
        taste = lam * np.log(s_pts)
        u[1:] = (mean.T[:, :, None, None] + taste[None, None, :, None]
                 + lam * eta.T[1:, None, None, :])
        return BaselineProblem(
            FiniteSupport(tuple(str(y) for y in range(L)), np.arange(L, dtype=float)),
            _covariate_support(self.covariates.reshape(X, -1)),
            FiniteSupport.from_values(s_pts), states, u,
            np.broadcast_to(prior_v, (X, E, len(states))),
            np.broadcast_to(eps_pmf, (X, E)))

    def closed_form_probs(self, theta) -> NDArray:
        """Choice probabilities of the continuous nested logit, ``[x, y]``."""
        beta, lam = self.split(theta)
        mean = self.covariates @ beta                           # [X, L-1]
        ex = np.exp(mean / lam)
        incl = ex.sum(axis=1)
        nest = incl ** lam
        out = np.empty((len(self.x_pmf), self.n_alternatives))
        out[:, 0] = 1.0 / (1.0 + nest)
        out[:, 1:] = ex / incl[:, None] * (nest / (1.0 + nest))[:, None]
        return out

    def draw_latent(self, theta, n: int, rng: np.random.Generator):
        """Continuous draws of ``(x, S, eta)`` for simulation."""
        _, lam = self.split(theta)
        x = rng.choice(len(self.x_pmf), size=n, p=self.x_pmf)
        s = ContinuousFamily("cardell-nested", (lam,)).rvs(n, rng)
        eta = rng.gumbel(0.0, 1.0, (n, self.n_alternatives))
        return x, s, eta

    def continuous_utilities(self, theta, x, s, eta, kind: str) -> NDArray:
        beta, lam = self.split(theta)
        mean = (self.covariates @ beta)[x]                       # [n, L-1]
        noise = eta if kind == "complete" else np.full_like(eta, EULER_GAMMA)
        u = np.empty_like(eta)
        u[:, 0] = noise[:, 0]
        u[:, 1:] = mean + lam * np.log(s)[:, None] + lam * noise[:, 1:]
        return u

    def describe(self) -> dict:
        return {"family": self.name, "parameters": list(self.param_names),
                "alternatives": self.n_alternatives, "s_grid": self.s_grid.to_dict(),
                "eta_grid": self.eta_grid.to_dict()}


def cara_utility(premium: NDArray, deductible: NDArray, r: NDArray, claim: NDArray) -> NDArray:
    """CARA payoff of losing ``premium + deductible*claim``, wealth dropped.

    Dropping wealth rescales every payoff by the same positive factor and
    adds a constant, so rankings of lotteries are unchanged.
    """
    loss = premium + deductible * claim
    r = np.asarray(r, float)
    small = np.abs(r) < 1e-300
    safe_r = np.where(small, 1.0, r)
    with np.errstate(over="ignore"):
        scaled = -np.expm1(safe_r * loss) / safe_r
    return np.where(small, -loss, scaled)


@dataclass(frozen=True, eq=False)
class CaraInsurance(ModelFamily):
    """Insurance choice with CARA payoffs; ``e`` is risk aversion, ``v`` the claim.

    Covariates are pairs (base premium, demographic ``z``). The claim occurs
    when ``z*beta + eta + tau >= 0`` with independent standard normal
    ``eta``, ``tau``, so the prior is ``Phi(z*beta / sqrt(2))``; when
    ``fixed_claim_prob`` is given that probability is used instead and beta
    is not a parameter. Risk aversion is Beta(gamma1, gamma2) truncated to
    ``r_bounds``. ``theta = (beta, gamma1, gamma2)`` or ``(gamma1, gamma2)``.
    """

    deductibles: NDArray
    multipliers: NDArray
    base_premiums: NDArray
    base_pmf: NDArray
    demographics: NDArray
    demo_pmf: NDArray
    r_grid: GridSpec
    r_bounds: tuple = (0.0, 0.02)
    fixed_claim_prob: float | None = None
    eta_grid: GridSpec = GridSpec.quantiles(21)
    name: str = "cara-insurance"

    def __post_init__(self):
        for attr in ("deductibles", "multipliers", "base_premiums", "base_pmf",
                     "demographics", "demo_pmf"):
            object.__setattr__(self, attr, np.atleast_1d(np.asarray(getattr(self, attr), float)))
        if np.any(self.deductibles < 0):
            raise ValueError("deductibles must be nonnegative")
        if self.deductibles.shape != self.multipliers.shape:
            raise ValueError("one premium multiplier per plan")

    @property
    def param_names(self) -> tuple:
        return ("gamma1", "gamma2") if self.fixed_claim_prob is not None \
            else ("beta", "gamma1", "gamma2")

    @property
    def covariate_values(self) -> NDArray:
        b, z = np.meshgrid(self.base_premiums, self.demographics, indexing="ij")
        return np.column_stack([b.ravel(), z.ravel()])

    @property
    def covariate_pmf(self) -> NDArray:
        p = np.outer(self.base_pmf / self.base_pmf.sum(), self.demo_pmf / self.demo_pmf.sum())
        return p.ravel()

    def split(self, theta) -> tuple[float, float, float]:
        theta = np.asarray(theta, float)
        if self.fixed_claim_prob is not None:
            return 0.0, float(theta[0]), float(theta[1])
        return float(theta[0]), float(theta[1]), float(theta[2])

    def parameter_point(self, theta) -> ParameterPoint:
        beta, g1, g2 = self.split(theta)
        theta_v = [] if self.fixed_claim_prob is not None else [beta]
        return ParameterPoint(theta_V=theta_v, theta_eps=[g1, g2])

    def claim_prob(self, beta: float) -> NDArray:
        if self.fixed_claim_prob is not None:
            return np.full(len(self.covariate_pmf), self.fixed_claim_prob)
        z = self.covariate_values[:, 1]
        return stats.norm.cdf(z * beta / np.sqrt(2.0))

    def r_points(self) -> NDArray:
        return self.r_grid.grid_points()

    def problem(self, theta) -> BaselineProblem:
        beta, g1, g2 = self.split(theta)
        if g1 <= 0 or g2 <= 0:
            raise ValueError("Beta shapes must be positive")
        r = self.r_points()
        fam = ContinuousFamily("beta-truncated", (g1, g2), self.r_bounds)
        eps_pmf = density_to_pmf(fam.pdf(r))
        cov = self.covariate_values
        X, E, L = len(cov), len(r), len(self.deductibles)
        premium = cov[:, 0][None, :] * self.multipliers[:, None]          # [y, x]
        claim = np.array([0.0, 1.0])
        u = cara_utility(premium[:, :, None, None], self.deductibles[:, None, None, None],
                         r[None, None, :, None], claim[None, None, None, :])
        p1 = self.claim_prob(beta)
        prior = np.stack([1.0 - p1, p1], axis=-1)                          # [x, v]
        return BaselineProblem(
            FiniteSupport(tuple(f"plan{y + 1}" for y in range(L)), np.arange(L, dtype=float)),
            FiniteSupport.from_values(cov),
            FiniteSupport.from_values(r), FiniteSupport(("no-claim", "claim"), claim),
            u, np.broadcast_to(prior[:, None, :], (X, E, 2)),
            np.broadcast_to(eps_pmf, (X, E)))

    def information(self, problem, theta, component):
        if component.kind != "eta-reveal":
            return super().information(problem, theta, component)
        return self.eta_reveal_information(problem, theta)

    def eta_reveal_information(self, problem: BaselineProblem, theta) -> InformationStructure:
        """The decision maker learns ``eta`` (on a grid) but not ``tau``.

        Signals are grid points ``t`` of eta with joint weight
        ``w(t) * P(claim | eta = t)``; conditioning on the claim gives the
        signal pmf, which is consistent with the model's prior by construction.
        """
        if self.fixed_claim_prob is not None:
            raise ValueError("eta-reveal needs the latent-index claim model")
        beta, _, _ = self.split(theta)
        normal = ContinuousFamily("normal", (0.0, 1.0))
        t_pts = self.eta_grid.grid_points(normal)
        w = density_to_pmf(normal.pdf(t_pts))
        z = self.covariate_values[:, 1]
        p_claim = stats.norm.cdf(z[:, None] * beta + t_pts[None, :])       # [x, t]
        joint = np.stack([w * (1.0 - p_claim), w * p_claim], axis=1)       # [x, v, t]
        sig = joint / joint.sum(axis=2, keepdims=True)
        _, X, E, _ = problem.shape
        return InformationStructure(FiniteSupport.from_values(t_pts),
                                    np.array(np.broadcast_to(sig[:, None], (X, E) + sig.shape[1:])))

    def describe(self) -> dict:
        return {"family": self.name, "parameters": list(self.param_names),
                "deductibles": self.deductibles.tolist(),
                "multipliers": self.multipliers.tolist(), "r_grid": self.r_grid.to_dict()}


@dataclass(frozen=True, eq=False)
class Voting(ModelFamily):
    """Spatial voting with abstention as the zero-payoff baseline action.

    Party ``y`` pays ``beta @ distances[x, y] + gamma * left_right[y] *
    demographic[x] + e + sigma * v_y`` where ``e`` and each ``v_y`` are
    standard normal. ``theta = (beta_1, ..., beta_K, gamma, sigma)``.
    """

    distances: NDArray                 # [X, parties, issues]
    demographic: NDArray               # [X]
    left_right: NDArray                # [parties]
    x_pmf: NDArray
    eps_grid: GridSpec = GridSpec.quantiles(15)
    v_grid: GridSpec = GridSpec.quantiles(15)
    party_labels: tuple = ()
    name: str = "voting"

    def __post_init__(self):
        d = np.asarray(self.distances, float)
        if d.ndim != 3:
            raise ValueError("distances must be [x, party, issue]")
        object.__setattr__(self, "distances", d)
        object.__setattr__(self, "demographic", np.asarray(self.demographic, float))
        object.__setattr__(self, "left_right", np.asarray(self.left_right, float))
        p = np.asarray(self.x_pmf, float)
        object.__setattr__(self, "x_pmf", p / p.sum())
        if self.demographic.shape != (d.shape[0],) or self.left_right.shape != (d.shape[1],):
            raise ValueError("demographics per x and left-right positions per party")

    @property
    def param_names(self) -> tuple:
        k = self.distances.shape[2]
        return tuple(f"beta{i + 1}" for i in range(k)) + ("gamma", "sigma")

    @property
    def covariate_pmf(self) -> NDArray:
        return self.x_pmf

    def parameter_point(self, theta) -> ParameterPoint:
        theta = np.asarray(theta, float)
        return ParameterPoint(theta_u=theta)

    def problem(self, theta) -> BaselineProblem:
        theta = np.asarray(theta, float)
        k = self.distances.shape[2]
        return voting_spec(theta[:k], float(theta[k]), float(theta[k + 1]), self.distances,
                           self.demographic, self.left_right, self.eps_grid, self.v_grid,
                           self.party_labels)


def voting_spec(beta, gamma: float, sigma: float, distances, demographic, left_right,
                eps_grid: GridSpec = GridSpec.quantiles(15),
                v_grid: GridSpec = GridSpec.quantiles(15),
                party_labels: Sequence[str] = ()) -> BaselineProblem:
    """Baseline problem of the voting model at one parameter value."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d = np.asarray(distances, float)
    X, P, K = d.shape
    beta = np.asarray(beta, float)
    if beta.shape != (K,):
        raise ValueError(f"beta needs {K} entries")
    normal = ContinuousFamily("normal", (0.0, 1.0))
    e_sup, e_pmf = discretize_pmf(normal, eps_grid)
    v_pts = v_grid.grid_points(normal)
    v_pmf = density_to_pmf(normal.pdf(v_pts))
    states = product_grid([v_pts] * P)
    prior = product_pmf([v_pmf] * P)
    e = e_sup.values[:, 0]
    systematic = d @ beta + gamma * np.asarray(demographic)[:, None] * np.asarray(left_right)[None, :]
    u = np.zeros((P + 1, X, len(e), len(states)))
    u[1:] = (systematic.T[:, :, None, None] + e[None, None, :, None]
             + sigma * states.values.T[:, None, None, :])
    labels = ("abstain",) + (tuple(party_labels) if party_labels
                             else tuple(f"party{p + 1}" for p in range(P)))
    cov = np.column_stack([d.reshape(X, -1), np.asarray(demographic)])
    return BaselineProblem(FiniteSupport(labels, np.arange(P + 1, dtype=float)),
                           FiniteSupport.from_values(cov), e_sup, states, u,
                           np.broadcast_to(prior, (X, len(e), len(states))),
                           np.broadcast_to(e_pmf, (X, len(e))))


# ---------------------------------------------------------------------------
# Population probabilities and sampling


def _action_kernel(problem: BaselineProblem, info: InformationStructure,
                   tie_break: TieRule) -> NDArray:
    """``P(y | x, e, v)`` for one information type, indexed ``[x, e, v, y]``."""
    strat = optimal_strategy(problem, info, tie_break)
    return np.einsum("xevt,xety->xevy", info.signal_pmf, strat.action_pmf)


def population_probs(family: ModelFamily, theta, mix: PopulationInfoMix,
                     tie_break: TieRule = TieRule.UNIFORM,
                     problem: BaselineProblem | None = None) -> NDArray:
    """Exact ``P0(y | x)`` of the discretised model under the mixture, ``[x, y]``."""
    problem = family.problem(theta) if problem is None else problem
    out = 0.0
    for comp in mix.components:
        if comp.weight == 0.0:
            continue
        info = family.information(problem, theta, comp)
        joint = induced_joint(problem, info, optimal_strategy(problem, info, tie_break))
        out = out + comp.weight * joint.choice_probs(problem)
    return np.asarray(out)


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Counts ``n(x, y)`` of observed (covariate, choice) pairs."""

    actions: tuple
    covariates: tuple
    counts: NDArray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (len(self.covariates), len(self.actions)):
            raise ValueError("counts must be indexed [x, y]")
        if np.any(c < 0):
            raise ValueError("counts must be nonnegative")
        c = c.astype(np.int64)
        c.setflags(write=False)
        object.__setattr__(self, "actions", tuple(str(a) for a in self.actions))
        object.__setattr__(self, "covariates", tuple(str(x) for x in self.covariates))
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def joint(self) -> NDArray:
        return self.counts / max(self.n, 1)

    @property
    def p_x(self) -> NDArray:
        return self.joint.sum(axis=1)

    @property
    def conditional(self) -> NDArray:
        """``P0(y | x)``; rows of unobserved covariate values are zero."""
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def resample(self, rng: np.random.Generator) -> "EmpiricalDistribution":
        """Nonparametric bootstrap: ``n`` i.i.d. draws of (y, x) pairs."""
        draw = rng.multinomial(self.n, self.joint.ravel()).reshape(self.counts.shape)
        return replace(self, counts=draw)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["y", "x", "count"])
        for i, x in enumerate(self.covariates):
            for j, y in enumerate(self.actions):
                w.writerow([y, x, int(self.counts[i, j])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source, actions: Sequence[str] | None = None,
                 covariates: Sequence[str] | None = None) -> "EmpiricalDistribution":
        """Read ``y,x,count`` rows; label orders default to first appearance."""
        text = source if "\n" in str(source) else open(source).read()
        rows = list(csv.DictReader(io.StringIO(text)))
        acts = list(actions) if actions else list(dict.fromkeys(r["y"] for r in rows))
        covs = list(covariates) if covariates else list(dict.fromkeys(r["x"] for r in rows))
        counts = np.zeros((len(covs), len(acts)), dtype=np.int64)
        for r in rows:
            counts[covs.index(r["x"]), acts.index(r["y"])] += int(r["count"])
        return cls(tuple(acts), tuple(covs), counts)

    def to_json(self) -> str:
        return json.dumps({"kind": "empirical-distribution", "actions": list(self.actions),
                           "covariates": list(self.covariates),
                           "counts": self.counts.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "EmpiricalDistribution":
        d = json.loads(text)
        return cls(tuple(d["actions"]), tuple(d["covariates"]), np.asarray(d["counts"]))


def _draw_rows(cdf_rows: NDArray, rows: NDArray, rng: np.random.Generator) -> NDArray:
    """Categorical draw from row ``rows[i]`` of a table of cumulative pmfs."""
    k = cdf_rows.shape[1]
    u = rng.uniform(size=rows.size)
    idx = (cdf_rows[rows] < u[:, None]).sum(axis=1)
    return np.minimum(idx, k - 1)


def _simulate_chunk(args) -> NDArray:
    (seed_seq, size, p_x, eps_cdf, prior_cdf, mix_cdf, sig_cdfs, strat_cdfs,
     X, E, V, Y) = args
    rng = np.random.Generator(np.random.Philox(seed_seq))
    x = _draw_rows(p_x[None, :], np.zeros(size, int), rng)
    e = _draw_rows(eps_cdf, x, rng)
    v = _draw_rows(prior_cdf, x * E + e, rng)
    k = _draw_rows(mix_cdf[None, :], np.zeros(size, int), rng)
    y = np.empty(size, dtype=int)
    for c in range(len(sig_cdfs)):
        sel = np.flatnonzero(k == c)
        if sel.size == 0:
            continue
        xs, es, vs = x[sel], e[sel], v[sel]
        t = _draw_rows(sig_cdfs[c], (xs * E + es) * V + vs, rng)
        n_t = sig_cdfs[c].shape[1]
        y[sel] = _draw_rows(strat_cdfs[c], (xs * E + es) * n_t + t, rng)
    counts = np.zeros((X, Y), dtype=np.int64)
    np.add.at(counts, (x, y), 1)
    return counts


def _chunks(n: int, seed: int) -> list:
    sizes = [SIM_CHUNK] * (n // SIM_CHUNK) + ([n % SIM_CHUNK] if n % SIM_CHUNK else [])
    return list(zip(np.random.SeedSequence(seed).spawn(len(sizes)), sizes))


def simulate(family: ModelFamily, theta, mix: PopulationInfoMix, n: int, seed: int,
             mode: str = "discrete", tie_break: TieRule = TieRule.UNIFORM,
             workers: int | None = None) -> EmpiricalDistribution:
    """Draw ``n`` decision makers and tabulate their (x, y) pairs.

    ``mode="discrete"`` follows the discretised model: covariate, taste,
    state, information type, signal, then an action from the optimal
    strategy. ``mode="continuous"`` draws from the underlying continuous
    nested logit (complete and degenerate information only). Draws come in
    fixed-size chunks with their own counter-based streams, so the result
    depends on ``seed`` only.
    """
    from .parallel import parallel_map

    if n < 1:
        raise ValueError("sample size must be at least 1")
    if mode == "continuous":
        return _simulate_continuous(family, theta, mix, n, seed)
    if mode != "discrete":
        raise ValueError(f"unknown simulation mode {mode!r}")
    problem = family.problem(theta)
    Y, X, E, V = problem.shape
    sig_cdfs, strat_cdfs = [], []
    for comp in mix.components:
        info = family.information(problem, theta, comp)
        strat = optimal_strategy(problem, info, tie_break)
        sig_cdfs.append(np.cumsum(info.signal_pmf.reshape(-1, info.signal_pmf.shape[-1]), axis=1))
        # inactive signals are never drawn; give them a harmless row
        a = np.where(strat.active[..., None], strat.action_pmf, 1.0 / Y)
        strat_cdfs.append(np.cumsum(a.reshape(-1, Y), axis=1))
    common = (np.cumsum(family.covariate_pmf), np.cumsum(problem.eps_pmf, axis=1),
              np.cumsum(problem.prior.reshape(X * E, V), axis=1), np.cumsum(mix.weights),
              sig_cdfs, strat_cdfs, X, E, V, Y)
    jobs = [(ss, size) + common for ss, size in _chunks(n, seed)]
    counts = sum(parallel_map(_simulate_chunk, jobs, workers))
    return EmpiricalDistribution(problem.actions.labels, problem.covariates.labels, counts)


def _simulate_continuous(family, theta, mix, n, seed) -> EmpiricalDistribution:
    if not isinstance(family, NestedLogit):
        raise ValueError("continuous simulation is available for the nested logit only")
    kinds = [c.kind for c in mix.components]
    if any(k not in ("complete", "degenerate") for k in kinds):
        raise ValueError("continuous simulation supports complete and degenerate information")
    X, L = len(family.x_pmf), family.n_alternatives
    counts = np.zeros((X, L), dtype=np.int64)
    for ss, size in _chunks(n, seed):
        rng = np.random.Generator(np.random.Philox(ss))
        x, s, eta = family.draw_latent(theta, size, rng)
        k = rng.choice(len(kinds), size=size, p=mix.weights)
        y = np.empty(size, dtype=int)
        for c, kind in enumerate(kinds):
            sel = k == c
            u = family.continuous_utilities(theta, x[sel], s[sel], eta[sel], kind)
            y[sel] = np.argmax(u, axis=1)
        np.add.at(counts, (x, y), 1)
    labels = tuple(str(y) for y in range(L))
    cov = _covariate_support(family.covariates.reshape(X, -1)).labels
    return EmpiricalDistribution(labels, cov, counts)


# ---------------------------------------------------------------------------
# Presets


@dataclass(frozen=True)
class Preset:
    name: str
    family: ModelFamily
    theta: NDArray
    mix: PopulationInfoMix
    bounds: tuple = ()
    steps: tuple = ()

    def population_probs(self) -> NDArray:
        return population_probs(self.family, self.theta, self.mix)


NESTED_MU = np.array([0.629, 0.812, -0.746])
NESTED_SIGMA = np.array([[3.913, 0.455, 0.531],
                         [0.455, 3.547, 0.558],
                         [0.531, 0.558, 3.971]])
FINE_S_GRID = GridSpec.explicit([0.1] + list(range(1, 51)))
FINE_ETA_GRID = GridSpec.explicit([-6, -4, -2, 0, 2, 4, 6])
# coarse grids for the four-alternative designs, sized so a sweep fits on one core
NESTED_S_GRID = GridSpec.explicit([0.1, 1, 5, 20, 50])
NESTED_ETA_GRID = GridSpec.explicit([-1.25, 0.75, 3.5])


def nested_covariates() -> tuple[NDArray, NDArray]:
    pts = np.array(np.meshgrid([-1, 0, 1], [-1, 0, 1], [-1, 0, 1], indexing="ij")).reshape(3, -1).T
    dens = stats.multivariate_normal(NESTED_MU, NESTED_SIGMA).pdf(pts)
    return pts.astype(float), dens / dens.sum()


def _cara_small(r_count: int = 20) -> CaraInsurance:
    return CaraInsurance(deductibles=[100, 200, 500], multipliers=[5 / 6, 7 / 10, 3 / 10],
                         base_premiums=[100.0], base_pmf=[1.0], demographics=[0.0],
                         demo_pmf=[1.0], r_grid=GridSpec.values(0.0, 0.02, r_count),
                         fixed_claim_prob=0.5)


def _cara_large(r_count: int = 20, eta_count: int = 21) -> CaraInsurance:
    z = np.arange(-4.0, 4.0 + 1e-9, 0.5)
    return CaraInsurance(deductibles=[100, 200, 500, 1000],
                         multipliers=[5 / 6, 7 / 10, 3 / 10, 1 / 10],
                         base_premiums=[100.0, 200.0, 300.0], base_pmf=[1, 1, 1],
                         demographics=z, demo_pmf=np.ones_like(z),
                         r_grid=GridSpec.values(0.0, 0.02, r_count),
                         eta_grid=GridSpec.quantiles(eta_count))


def voting_toy() -> Voting:
    """Two parties, two covariate cells, one policy issue, no shared taste shock.

    At the preset theta every expected party payoff is negative, so a voter
    without information abstains while an informed voter sometimes votes.
    """
    distances = np.array([[[0.5], [1.5]], [[1.0], [0.8]]])
    return Voting(distances=distances, demographic=np.array([0.0, 1.0]),
                  left_right=np.array([-1.0, 1.0]), x_pmf=np.array([0.5, 0.5]),
                  eps_grid=GridSpec.explicit([0.0]), v_grid=GridSpec.quantiles(9))


def preset(name: str, **grids) -> Preset:
    """Named simulation designs ``dgp1`` ... ``dgp7`` and ``voting-toy``.

    Keyword overrides: ``s_grid`` and ``eta_grid`` for the nested logit,
    ``r_count`` and ``eta_count`` for the insurance designs.
    """
    name = name.lower()
    if name == "dgp1":
        fam = NestedLogit(3, np.zeros((1, 2)), np.ones(1), grids.get("s_grid", FINE_S_GRID),
                          grids.get("eta_grid", FINE_ETA_GRID))
        return Preset(name, fam, np.array([0.0, 0.5]), PopulationInfoMix.of(complete=1.0),
                      bounds=((-2.0, 2.0), (0.1, 0.9)), steps=(0.1, 0.1))
    if name in ("dgp2", "dgp3", "dgp4"):
        z, pz = nested_covariates()
        fam = NestedLogit(4, z, pz, grids.get("s_grid", NESTED_S_GRID),
                          grids.get("eta_grid", NESTED_ETA_GRID))
        share = {"dgp2": 0.1, "dgp3": 0.5, "dgp4": 1.0}[name]
        mix = PopulationInfoMix((InfoComponent(share, "complete"),
                                 InfoComponent(1.0 - share, "degenerate")))
        return Preset(name, fam, np.array([1.6, 0.5]), mix,
                      bounds=((0.0, 4.0), (0.1, 0.9)), steps=(0.1, 0.1))
    if name == "dgp5":
        fam = _cara_small(grids.get("r_count", 20))
        return Preset(name, fam, np.array([1.0, 10.0]), PopulationInfoMix.of(complete=1.0),
                      bounds=((0.1, 20.0), (0.1, 20.0)), steps=(0.1, 1.0))
    if name in ("dgp6", "dgp7"):
        fam = _cara_large(grids.get("r_count", 20), grids.get("eta_count", 21))
        if name == "dgp6":
            mix = PopulationInfoMix((InfoComponent(1 / 3, "degenerate"),
                                     InfoComponent(1 / 3, "complete"),
                                     InfoComponent(1 - 2 / 3, "eta-reveal")))
        else:
            mix = PopulationInfoMix.of(degenerate=1.0)
        return Preset(name, fam, np.array([0.7, 1.0, 10.0]), mix,
                      bounds=((0.0, 2.0), (0.1, 20.0), (0.1, 20.0)), steps=(0.1, 0.1, 1.0))
    if name == "voting-toy":
        return Preset(name, voting_toy(), np.array([-1.0, 0.5, 2.0]),
                      PopulationInfoMix.of(degenerate=1.0),
                      bounds=((-2.0, 0.0), (0.0, 1.0), (1.0, 3.0)), steps=(0.25, 0.25, 0.5))
    raise KeyError(f"unknown preset {name!r}")


PRESETS = ("dgp1", "dgp2", "dgp3", "dgp4", "dgp5", "dgp6", "dgp7", "voting-toy")
