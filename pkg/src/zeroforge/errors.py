"""Exception taxonomy shared across the package.

Every error raised by the library derives from :class:`ZeroforgeError` so
callers can catch the whole family with one clause.  Validation problems
additionally derive from :class:`ValueError`, runtime failures from
:class:`RuntimeError`, matching how the standard library signals the same
situations.
"""

from __future__ import annotations


class ZeroforgeError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(ZeroforgeError, ValueError):
    """An argument violated a documented precondition."""


class ValidationError(InvalidArgumentError):
    """A configuration file or CLI input failed validation.

    The message always names the offending field.
    """


class DegeneratePolynomialError(InvalidArgumentError):
    """A polynomial's leading coefficient is (numerically) zero."""


class ConvergenceError(ZeroforgeError, RuntimeError):
    """An iterative numerical procedure failed to converge."""


class DegenerateSpectrumError(ZeroforgeError, RuntimeError):
    """Eigenvalues too close to differentiate through.

    Raised when a perturbation-based eigenvalue derivative is requested
    for a matrix whose spectrum has a gap below tolerance.  Training
    loops catch this, skip the sample, and keep a count.
    """


class NotBracketedError(ZeroforgeError, ValueError):
    """An interpolation target lies outside the measured curve."""


class UnsupportedSizeError(ZeroforgeError, ValueError):
    """A problem size outside the supported range was requested."""


class TrainingAbortError(ZeroforgeError, RuntimeError):
    """Training hit a non-finite loss or gradient and stopped."""
