"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: usage errors -> 1,
``DataError`` -> 2, ``NumericalError`` -> 3.
"""


class HypgwError(Exception):
    """Base class for all package errors."""


class InvalidInputError(HypgwError, ValueError):
    """An argument violates a documented precondition (shape, range, finiteness)."""


class DataError(HypgwError):
    """A dataset file is missing, malformed, or internally inconsistent."""


class NumericalError(HypgwError, ArithmeticError):
    """A computation left its numerical domain (divergence, domain violation)."""
