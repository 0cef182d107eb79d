"""Exception hierarchy.

Everything raised deliberately by the library derives from ``HoiError`` so the
command line front end can map failures onto exit codes.
"""


class HoiError(Exception):
    """Base class for library errors."""


class DomainError(HoiError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ValidationError(HoiError, ValueError):
    """A measure, state or model violates its invariants."""


class ConfigurationError(HoiError, ValueError):
    """Inconsistent model or run configuration."""


class SizeError(HoiError, ValueError):
    """Problem too large for the requested (brute force) routine."""


class CapabilityError(HoiError):
    """The requested evaluation path is not available for this model."""


class NaiveTooExpensiveError(CapabilityError):
    """Nested-sum evaluation would exceed the operation budget."""


class FlowFoldingError(HoiError):
    """A map or flow that should be an orientation preserving homeomorphism is not."""


class DivergenceError(HoiError):
    """Integration produced non-finite values."""

    def __init__(self, message, last_valid_time=None):
        super().__init__(message)
        self.last_valid_time = last_valid_time


class AccuracyError(HoiError):
    """A solver tolerance check failed."""


class ReductionInapplicableError(HoiError):
    """The Watanabe-Strogatz parameterization does not exist for this state."""


class ConvergenceError(HoiError):
    """An iterative solver did not converge."""


class NearSingularError(HoiError):
    """Evaluation too close to a coordinate singularity."""


class PathologicalCouplingError(HoiError):
    """Coupling function with too many zeros for the root scanner."""
