"""Exception and warning types shared across the package.

Everything raised on purpose derives from :class:`SpdGaussError` so callers
(and the CLI) can map failures to exit codes without matching on message
strings.
"""

from __future__ import annotations


class SpdGaussError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(SpdGaussError, ValueError):
    """Malformed input: bad shapes, non-finite entries, inconsistent options."""


class DimensionMismatchError(InvalidInputError):
    """Operands live in different dimensions (matrix sizes or vector lengths)."""


class DomainError(InvalidInputError):
    """Input outside the mathematical domain of an operation.

    Typical cases: matrix log / inverse square root of a matrix with a
    non-positive eigenvalue, or a covariance that is not positive definite.
    """


class NumericalError(SpdGaussError, ArithmeticError):
    """An iterative routine failed to produce a usable result.

    Parameters
    ----------
    message : str
        Human-readable description.
    last_iterate : object, optional
        Best point reached before the failure, when one exists. Kept so a
        caller can inspect or restart from it.
    report : object, optional
        Fit report (or similar diagnostics) accumulated up to the failure.
    """

    def __init__(self, message, last_iterate=None, report=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.report = report


class SingularCovarianceError(NumericalError):
    """A covariance estimate came out singular.

    Carries the mean estimate and the raw (unregularized) covariance so a
    caller may regularize and continue.

    Attributes
    ----------
    mu_hat : ndarray
        Tangent-space mean estimate at the base point in use.
    sigma_raw : ndarray
        The singular covariance estimate (full matrix or diagonal vector).
    """

    def __init__(self, message, mu_hat=None, sigma_raw=None):
        super().__init__(message)
        self.mu_hat = mu_hat
        self.sigma_raw = sigma_raw


class DataFormatError(SpdGaussError, OSError):
    """A dataset, parameter, or config file could not be read or parsed.

    Attributes
    ----------
    path : str or None
        File the error refers to.
    record : int or None
        Zero-based index of the offending record, when applicable.
    """

    def __init__(self, message, path=None, record=None):
        if path is not None:
            loc = str(path) if record is None else f"{path}, record {record}"
            message = f"{message} ({loc})"
        super().__init__(message)
        self.path = None if path is None else str(path)
        self.record = record


class RegularizationWarning(UserWarning):
    """Emitted when a singular covariance estimate was ridge-regularized."""


class SmallSampleWarning(UserWarning):
    """Emitted when a fit is attempted with fewer samples than parameters."""
