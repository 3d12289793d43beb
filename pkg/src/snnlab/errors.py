"""Exception hierarchy. CLI exit codes hang off these classes."""


class SnnLabError(Exception):
    exit_code = 1


class ParameterError(SnnLabError, ValueError):
    exit_code = 2


class ShapeError(SnnLabError, ValueError):
    exit_code = 2


class InsufficientDataError(SnnLabError, ValueError):
    exit_code = 3


class ConfigError(SnnLabError, ValueError):
    exit_code = 2


class DataError(SnnLabError):
    exit_code = 3


class FormatError(DataError):
    """Malformed IDX file; ``offset`` is the byte where parsing failed."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class MissingCalibrationError(SnnLabError, ValueError):
    exit_code = 2


class VarianceOverflowError(SnnLabError, OverflowError):
    exit_code = 2
