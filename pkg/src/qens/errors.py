"""Exception hierarchy shared across the toolkit.

ConfigError maps to process exit code 2, DataError to exit code 3.
"""


class QensError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(QensError):
    """Invalid configuration, spec, or parameter value."""


class DataError(QensError):
    """Problem with input data (files, series, forecasts)."""


class ParseError(DataError):
    """Malformed input row; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateCellError(DataError):
    """A (model, location, forecast_date, target_end_date, level) cell appeared twice."""


class ValidationError(DataError):
    """A forecast violates a structural invariant (ordering, sign, completeness)."""
