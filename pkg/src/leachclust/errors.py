"""Exception types raised across the toolkit."""


class DimensionError(ValueError):
    """Array shapes or index ranges are inconsistent."""


class ConfigurationError(ValueError):
    """A parameter is out of its admissible range."""


class IngestionError(ValueError):
    """A data file could not be parsed.

    ``row`` and ``column`` are 1-based coordinates in the source file when
    known.
    """

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        if row is not None:
            message = f"{message} (row {row}, column {column})"
        super().__init__(message)


class NumericalError(ArithmeticError):
    """An optimizer produced a non-finite objective.

    The objective values seen so far are attached as ``trace``.
    """

    def __init__(self, message, trace=()):
        self.trace = list(trace)
        super().__init__(message)
