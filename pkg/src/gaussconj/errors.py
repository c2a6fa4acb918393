"""Exception hierarchy.

The harness maps these onto exit codes: configuration problems exit 1,
gate and feasibility refusals exit 2, everything else exits 3.
"""

from __future__ import annotations


class GaussConjError(Exception):
    """Base class for all package errors."""


class DomainError(GaussConjError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(GaussConjError, ValueError):
    """Inconsistent model, ensemble or variant configuration."""


class ModelInconsistencyError(ConfigurationError):
    """A correlation model does not show the declared local behaviour at 0."""


class ShapeError(GaussConjError, ValueError):
    """Paths or arrays with incompatible grids."""


class CovarianceNotPSDError(GaussConjError, RuntimeError):
    """Neither circulant embedding nor Cholesky could factor a covariance."""


class InsufficientDataError(GaussConjError, ValueError):
    """Too few rows or samples for the requested statistic."""


class RefusalError(GaussConjError):
    """A precondition gate refused to run; ``advice`` says how to fix it."""

    def __init__(self, message: str, advice: dict | None = None):
        super().__init__(message)
        self.advice = dict(advice or {})


class TruncationNotCertified(RefusalError):
    """The time horizon K*a is too short for the requested truncation error."""


class FeasibilityError(RefusalError):
    """A rejection sampler would accept too few samples."""
