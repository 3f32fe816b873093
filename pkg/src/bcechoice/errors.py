"""Exception types raised across the package."""


class BCEChoiceError(Exception):
    """Base class for package errors."""


class ZeroMassSignal(BCEChoiceError):
    """A signal has zero probability under the prior, so no posterior exists."""


class DimensionMismatch(BCEChoiceError, ValueError):
    """Array shapes disagree with the supports they are attached to."""


class InvalidPmf(BCEChoiceError, ValueError):
    """A probability mass function is negative or does not sum to one."""


class SolverFailure(BCEChoiceError):
    """The numerical solver broke down; says nothing about feasibility."""

    def __init__(self, message: str, diagnostic: dict | None = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class Infeasible(BCEChoiceError):
    """The constraint set is empty."""


class Unbounded(BCEChoiceError):
    """The objective is unbounded over the constraint set."""


class NotObedient(BCEChoiceError):
    """Following the recommendation is not optimal for some signal."""


class AllZeroMass(BCEChoiceError, ValueError):
    """A density vanishes at every grid point."""


class GridTooLarge(BCEChoiceError, ValueError):
    """A product grid exceeds the configured size cap."""
