"""Exception taxonomy shared by all modules.

The CLI maps these onto process exit codes, so library code should raise
the most specific class that applies rather than bare ValueError.
"""


class WsgmError(Exception):
    """Base class for all package errors."""


class ConfigurationError(WsgmError):
    """Invalid parameter value, unsupported option, or malformed config."""


class ShapeMismatchError(WsgmError):
    """Array shapes incompatible with the requested transform."""


class DegenerateDataError(WsgmError):
    """Dataset carries no usable signal for the requested estimate."""


class ResourceLimitError(WsgmError):
    """Requested problem size exceeds a dense-matrix or budget cap."""


class DomainError(WsgmError):
    """Mathematical domain violation (nonpositive variance, singular cov)."""


class NumericalDivergenceError(WsgmError):
    """Non-finite values appeared during iteration.

    Carries the step index (and optionally the cascade scale) at which the
    divergence was detected.
    """

    def __init__(self, message, step=None, scale=None):
        super().__init__(message)
        self.step = step
        self.scale = scale


class TrainingDivergedError(WsgmError):
    """Optimization loss increased persistently; carries the time index."""

    def __init__(self, message, time_index=None):
        super().__init__(message)
        self.time_index = time_index
