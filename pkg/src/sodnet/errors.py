"""Exception types shared across the package.

The CLI maps these onto distinct exit codes (see cli.py): configuration
problems, bad data, and numerical divergence are told apart so scripts can
react to each.
"""


class ParameterError(ValueError):
    """An argument violates an operation's preconditions."""


class DataError(ValueError):
    """Input data is malformed (NaN/Inf, wrong layout, unreadable file)."""


class ConfigurationError(Exception):
    """A run configuration is inconsistent or incomplete."""


class DivergenceError(ArithmeticError):
    """Training produced a non-finite loss."""
