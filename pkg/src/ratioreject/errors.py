"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class RatioRejectError(Exception):
    exit_code = 1


class ConfigError(RatioRejectError, ValueError):
    """Invalid configuration or parameter outside its admissible range."""

    exit_code = 2


class UnsupportedDivergenceError(ConfigError):
    pass


class DataError(RatioRejectError, ValueError):
    """Malformed input data (schema, non-finite values, bad probability rows)."""

    exit_code = 3


class DomainError(DataError):
    """Argument outside the mathematical domain of a function."""


class SupportMismatchError(DataError):
    pass


class SolverError(RatioRejectError, ArithmeticError):
    """A numeric solver failed or its precondition does not hold."""

    exit_code = 4


class PreconditionError(SolverError):
    def __init__(self, message, min_lambda=None):
        super().__init__(message)
        self.min_lambda = min_lambda
