"""Maximum-likelihood baselines under a fixed information assumption.

If every DM is assumed to process the complete (or the degenerate)
information structure, the model is a standard point-identified choice
model. These estimators give the usual comparison points and starting
values for grid construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize

from .dgp import EmpiricalDistribution
from .model import TieRule, complete_info_choice_probs, degenerate_info_choice_probs

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class MLEResult:
    theta: NDArray
    loglik: float
    info: str
    likelihood: str
    evaluations: int
    converged: bool

    def to_dict(self) -> dict:
        return {"theta": self.theta.tolist(), "loglik": self.loglik, "info": self.info,
                "likelihood": self.likelihood, "evaluations": self.evaluations,
                "converged": self.converged}


def model_probs(family, theta, info: str = "complete", likelihood: str = "discretized",
                tie_break: TieRule = TieRule.UNIFORM) -> NDArray:
    """``P(y | x; theta)`` indexed ``[x, y]`` under one information assumption.

    ``likelihood="closed-form"`` uses the continuous nested-logit formula and
    is only available for complete information.
    """
    if likelihood == "closed-form":
        if info != "complete" or not hasattr(family, "closed_form_probs"):
            raise ValueError("closed-form probabilities exist only for the complete-information "
                             "nested logit")
        return family.closed_form_probs(theta)
    if likelihood != "discretized":
        raise ValueError("likelihood must be 'discretized' or 'closed-form'")
    problem = family.problem(theta)
    if info == "complete":
        return complete_info_choice_probs(problem, tie_break)
    if info == "degenerate":
        return degenerate_info_choice_probs(problem, tie_break)
    raise ValueError("info must be 'complete' or 'degenerate'")


def log_likelihood(family, theta, counts: NDArray, info: str = "complete",
                   likelihood: str = "discretized") -> float:
    """Average log-likelihood ``(1/n) sum n(x, y) log P(y | x; theta)``.

    ``counts`` may be integer counts or any nonnegative weights, such as
    population probabilities. Probabilities are floored at ``PROB_FLOOR`` so
    that cells the model rules out are penalised rather than fatal.
    """
    counts = np.asarray(counts, float)
    try:
        p = model_probs(family, theta, info, likelihood)
    except (ValueError, FloatingPointError):
        return -np.inf
    return float((counts * np.log(np.maximum(p, PROB_FLOOR))).sum() / counts.sum())


def fit_mle(family, data, info: str = "complete", likelihood: str = "discretized",
            grid: NDArray | None = None, start: NDArray | None = None,
            bounds=None, polish: bool = True) -> MLEResult:
    """Maximise the log-likelihood over a starting grid, then polish with Nelder-Mead.

    ``data`` is an :class:`EmpiricalDistribution` or an ``[x, y]`` array of
    counts or probabilities. The discretised likelihood is piecewise smooth
    in ``theta`` (argmax indicators jump), hence the derivative-free polish.
    Points outside ``bounds`` score ``-inf``.
    """
    counts = data.counts if isinstance(data, EmpiricalDistribution) else np.asarray(data, float)
    bounds = None if bounds is None else np.asarray(bounds, float)
    evals = 0

    def score(theta) -> float:
        nonlocal evals
        evals += 1
        theta = np.asarray(theta, float)
        if bounds is not None and (np.any(theta < bounds[:, 0]) or np.any(theta > bounds[:, 1])):
            return -np.inf
        return log_likelihood(family, theta, counts, info, likelihood)

    candidates = []
    if grid is not None:
        candidates += list(np.atleast_2d(grid))
    if start is not None:
        candidates.append(np.asarray(start, float))
    if not candidates:
        raise ValueError("need a starting grid or a starting point")
    scores = [score(c) for c in candidates]
    best = int(np.argmax(scores))
    theta, value = np.asarray(candidates[best], float), scores[best]
    converged = bool(np.isfinite(value))
    if polish and np.isfinite(value):
        res = minimize(lambda t: -score(t), theta, method="Nelder-Mead",
                       options={"xatol": 1e-6, "fatol": 1e-10, "maxiter": 2000})
        if -res.fun >= value:
            theta, value = np.asarray(res.x, float), float(-res.fun)
        converged = bool(res.success)
    return MLEResult(theta, float(value), info, likelihood, evals, converged)
