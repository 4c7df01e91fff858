"""
Exception hierarchy for the EIV adjusted likelihood ratio toolkit.
"""


class EIVError(Exception):
    """Base class for every error raised by the toolkit."""


class DomainError(EIVError, ValueError):
    """An argument lies outside the domain of a function (e.g. u < 0)."""


class NotPositiveDefinite(EIVError, ValueError):
    """
    A matrix expected to be positive definite failed factorization.

    Attributes:
        pivot (int): Zero-based index of the failing Cholesky pivot
    """

    def __init__(self, pivot, message=None):
        self.pivot = pivot
        super().__init__(message or f"Matrix is not positive definite (pivot {pivot})")


class EvaluationError(EIVError):
    """The log-likelihood or one of its derivatives could not be evaluated."""


class InitializationError(EIVError):
    """Starting values could not be computed from the data."""


class FitNotConverged(EIVError):
    """
    One of the maximum likelihood fits did not converge.

    Attributes:
        full: FitResult of the unrestricted fit (may be None)
        restricted: FitResult of the restricted fit (may be None)
    """

    def __init__(self, message, full=None, restricted=None):
        self.full = full
        self.restricted = restricted
        super().__init__(message)


class BoundaryEstimate(FitNotConverged):
    """A fit stopped with a variance at the boundary of the parameter space."""


class DataSchemaError(EIVError, ValueError):
    """
    The input data file does not follow the expected CSV schema.

    Attributes:
        line (int or None): 1-based line number in the file
        column (str or None): Offending column name
    """

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        location = []
        if line is not None:
            location.append(f"line {line}")
        if column is not None:
            location.append(f"column '{column}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")


class ConfigError(EIVError, ValueError):
    """A configuration file is missing a key or holds an invalid value."""


class HypothesisError(EIVError, ValueError):
    """A null hypothesis specification is malformed or inconsistent with the model."""
