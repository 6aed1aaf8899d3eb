"""Exception hierarchy shared across the package."""


class RdoptError(Exception):
    """Base class for all errors raised by rdopt."""


class ShapeError(RdoptError, ValueError):
    """Array dimensions do not match."""


class UnsupportedDimensionError(RdoptError, ValueError):
    """Requested Sobol dimension exceeds the direction-number table."""


class NumericError(RdoptError, ValueError):
    """Non-finite input or output where a finite value is required."""


class NotPositiveDefiniteError(RdoptError, ArithmeticError):
    """A covariance or kernel matrix could not be factorized."""


class FitError(RdoptError):
    """Hyperparameter optimization failed for every restart."""


class InvalidCutoffError(RdoptError, ValueError):
    """Warp cutoff does not lie above the lower bound."""


class OutOfDomainError(RdoptError, ValueError):
    """A value lies outside the bounded output domain."""


class EmptySampleError(RdoptError, ValueError):
    """A statistic was requested on an empty sample."""


class EstimateError(RdoptError):
    """Too many objective evaluations failed to form an estimate."""


class DomainTooSmallError(RdoptError, ValueError):
    """A shrunk domain would be empty along some axis."""

    def __init__(self, message, axis=None):
        super().__init__(message)
        self.axis = axis


class OutlierFilterError(RdoptError):
    """Outlier filtering would discard too large a share of the data."""


class CampaignError(RdoptError):
    """A pipeline stage failed; carries the list of completed stages."""

    def __init__(self, message, stage=None, completed=()):
        super().__init__(message)
        self.stage = stage
        self.completed = list(completed)


class ConfigError(RdoptError, ValueError):
    """Campaign configuration is invalid."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class SchemaVersionError(RdoptError, ValueError):
    """Artifact carries an unknown schema version."""
