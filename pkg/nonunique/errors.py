"""
Exception types raised across the toolkit.
"""

from __future__ import annotations

from typing import Any


class DimensionError(ValueError):
    """Array shapes do not match the problem dimensions."""


class PreconditionError(ValueError):
    """An operation was called outside its contract."""


class ResolutionError(ValueError):
    """A construction cannot be realized at the requested grid resolution."""


class DegeneracyError(ValueError):
    """Input data is degenerate (collinear directions, lost separation, ...)."""


class RangeError(ValueError):
    """A rescaled cube leaves the domain."""


class CapabilityError(RuntimeError):
    """A derivative is required but neither analytic nor finite differences are allowed."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""

    def __init__(self, message: str, best: Any = None, residual: float = float("inf")):
        super().__init__(message)
        self.best = best
        self.residual = residual


class DecompositionError(RuntimeError):
    """A point could not be decomposed onto an equal-flux pair."""


class RefinementError(RuntimeError):
    """A refinement step missed at least one certificate."""

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report
