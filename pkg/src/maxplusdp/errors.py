"""Exception types shared across the solver packages."""

from __future__ import annotations


class MaxplusdpError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(MaxplusdpError, ValueError):
    """State, control, or support dimensions disagree."""


class CurvatureMismatchError(MaxplusdpError, ValueError):
    """A support's curvature does not match the table it is inserted into."""


class EmptyTableError(MaxplusdpError, ValueError):
    """An operation required a nonempty table (rank >= 1)."""


class ConfigError(MaxplusdpError, ValueError):
    """Invalid or unknown configuration content."""


class GridBoxError(MaxplusdpError, ValueError):
    """The grid oracle's state box is not invariant under the sampled controls."""

    def __init__(self, message: str, state=None, control=None):
        super().__init__(message)
        self.state = state
        self.control = control


class BudgetExceededError(MaxplusdpError, RuntimeError):
    """Combinatorial rank budget exceeded; carries the trace collected so far."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class InvariantViolationError(MaxplusdpError, RuntimeError):
    """A run-level invariant (monotonicity, rank bound) failed.

    ``checkpoint_path`` points at the state dump written just before aborting,
    when one could be written.
    """

    def __init__(self, message: str, checkpoint_path=None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path
