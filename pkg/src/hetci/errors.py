"""Exception hierarchy shared across the package.

Validation problems (bad arguments, malformed data, inadmissible designs)
map to CLI exit code 2; numerical failures map to exit code 3.
"""


class HetciError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class DomainError(HetciError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class AssumptionViolationError(HetciError, ValueError):
    """The grouped-sample contract is violated (e.g. a group with < 2 members)."""


class DesignError(HetciError, ValueError):
    """A group-size design is inadmissible for the requested sample size."""


class DataFormatError(HetciError, ValueError):
    """An input file cannot be parsed."""


class NumericalError(HetciError, ArithmeticError):
    """A numerical routine failed to produce a usable result."""

    exit_code = 3


class BracketingError(NumericalError):
    """A root bracket could not be established."""
