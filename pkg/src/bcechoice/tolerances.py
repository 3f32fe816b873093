"""Numerical tolerances shared by every module.

A single record is passed around (or the module default is used) so that
result files can echo exactly which cutoffs produced them.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    pmf_sum: float = 1e-12
    """Allowed deviation of a probability mass function from summing to one."""
    argmax_rel: float = 1e-10
    """Relative slack when deciding which actions attain a maximum."""
    feasibility: float = 1e-8
    """Phase-one optimum below which a linear system is declared feasible."""
    lp_residual: float = 1e-8
    """Constraint residual accepted on an optimal LP solution."""
    norm_kkt: float = 1e-7
    """Residual accepted on ball-constrained programs."""
    joint_sum: float = 1e-9
    """Allowed deviation of a BCE joint block from summing to one."""
    obedience: float = 1e-8
    """Largest obedience violation accepted when reading a joint as a BCE."""
    hull: float = 1e-9
    """Slack used when certifying facets of a predicted-set polytope."""

    def to_dict(self) -> dict:
        return asdict(self)

    def with_(self, **changes) -> "Tolerances":
        return replace(self, **changes)


DEFAULT = Tolerances()
