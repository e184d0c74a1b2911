"""Exception types raised across the package."""

import numpy as np


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Matrix could not be Cholesky-factorized at any allowed jitter level."""


class InvalidBracket(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class RhoOutOfRange(ValueError):
    pass


class DomainError(ValueError):
    pass


class UnknownGenerator(ValueError):
    pass


class ROutOfRange(ValueError):
    pass


class ParseError(ValueError):
    """CSV content could not be parsed; message carries row/column location."""


class ColumnOverlap(ValueError):
    pass


class SingleClass(ValueError):
    """Label column does not contain exactly two classes."""


class ConfigError(ValueError):
    pass
