"""
exceptions.py

Error hierarchy shared by all apps. Numeric preconditions raise DomainError
(a ValueError), so callers that only know about ValueError keep working.
"""


class DeepCompositeError(Exception):
    """Base class for every error raised by this project."""


class DomainError(DeepCompositeError, ValueError):
    """An input lies outside the domain of the operation."""


class ParseError(DomainError):
    """
    A CSV file or schema could not be turned into a Dataset.

    Attributes:
        row (int | None): Zero-based data row of the problem, if known.
        column (str | None): Column involved, if known.
    """

    def __init__(self, message, row=None, column=None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ConfigurationError(DeepCompositeError):
    """Configuration values are individually valid but do not fit together."""


class InfeasibleSpecError(DomainError):
    """No composite score form satisfies the sign constraints of the fitted b values."""


class TrainingError(DeepCompositeError):
    """Every start of a fit diverged."""
