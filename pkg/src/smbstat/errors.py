"""Exception hierarchy.

``ValidationError`` and its subclasses map to CLI exit code 2.
"""


class SmbError(Exception):
    pass


class ValidationError(SmbError, ValueError):
    """Malformed input: bad weights, non-stochastic rows, bad grids, bad files."""


class NonStationaryError(ValidationError):
    pass


class NonErgodicError(ValidationError):
    """Chain is reducible or periodic, or the stationary solve did not converge."""

    def __init__(self, message, transition_matrix=None):
        super().__init__(message)
        self.transition_matrix = transition_matrix


class PeriodicChainError(NonErgodicError):
    pass


class InfiniteInformationError(ValidationError):
    """Word has zero measure, so -log mu is +inf."""


class MeasureUnderflowError(SmbError, FloatingPointError):
    """Product of positive factors underflowed to 0."""


class DegenerateVarianceError(ValidationError):
    """sigma = 0: the information function has no normal limit to compare against."""


class EnumerationCapError(ValidationError):
    """Exact pairwise/subset evaluation would exceed the configured atom cap."""


class InsufficientSamplesError(ValidationError):
    pass
