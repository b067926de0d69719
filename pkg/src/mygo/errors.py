"""Exception hierarchy shared across the package.

Each class maps to one CLI exit code so scripted callers can tell a bad
config from bad data from a numeric failure.
"""


class MygoError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(MygoError):
    """Invalid configuration: unknown keys, bad values, impossible shapes."""

    exit_code = 2


class DataError(MygoError):
    """Invalid input data: malformed files, unresolvable names, bad headers."""

    exit_code = 3


class NumericError(MygoError):
    """Numeric failure: non-finite values, zero norms, failed gradient checks."""

    exit_code = 4


class NonDeterministicError(NumericError):
    """Two evaluations of a supposedly pure computation disagreed."""
