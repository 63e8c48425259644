"""Exception types raised across the package."""


class AdaScaleError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(AdaScaleError):
    """Cholesky factorization failed even after jitter escalation."""


class DimensionUnsupported(AdaScaleError):
    """Requested dimension exceeds the Sobol direction-number table."""


class NonFiniteObjective(AdaScaleError):
    """A local minimizer received NaN or infinity from the objective."""


class FitFailed(AdaScaleError):
    """Every hyperparameter restart failed."""


class InvalidTrustRegion(AdaScaleError):
    """Trust-region side length must be strictly positive."""


class OutOfDomain(AdaScaleError):
    """A normalized point lies outside the unit hypercube."""


class ObjectiveFailure(AdaScaleError):
    """The black-box objective raised or returned a non-finite value.

    The partially filled run record is attached as ``record``.
    """

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class ConfigError(AdaScaleError):
    """Invalid experiment configuration."""


class MismatchedTraces(AdaScaleError):
    """Traces within a variant group do not share a common length."""
