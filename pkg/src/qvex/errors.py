"""Exception types shared across the package."""

from __future__ import annotations


class ShapeMismatch(ValueError):
    """Two grid functions do not live on the same grid / component count."""


class DegenerateSet(ValueError):
    """A constraint set is degenerate (e.g. projection onto a zero price curve)."""


class DomainViolation(ValueError):
    """Input lies outside the domain of a utility family."""


class NumericFailure(ArithmeticError):
    """An operator evaluation produced non-finite values."""


class SamplingFailure(RuntimeError):
    """The feasible-point sampler could not produce usable samples."""


class NonConvergence(RuntimeError):
    """An iterative routine exhausted its budget before reaching tolerance.

    Carries the last iterate and the residuals observed when it gave up so
    callers can inspect or resume.
    """

    def __init__(self, message, last_iterate=None, residuals=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residuals = residuals


class InnerSolveFailure(RuntimeError):
    """One or more per-agent inner solves failed to certify."""

    def __init__(self, message, failed_agents=()):
        super().__init__(message)
        self.failed_agents = tuple(failed_agents)
