"""Exception types raised across the package.

The CLI maps them onto exit codes: configuration problems exit 2, data and
schema problems exit 3, numeric failures exit 4.
"""


class UpliftError(Exception):
    """Base class for all package errors."""


class ConfigError(UpliftError, ValueError):
    """Invalid configuration or parameters."""


class SchemaError(UpliftError, ValueError):
    """Input file does not have the expected columns."""


class DataError(UpliftError, ValueError):
    """Input values violate a data contract."""


class ShapeError(UpliftError, ValueError):
    """Array dimensions do not match what a fitted model expects."""


class NumericError(UpliftError, ArithmeticError):
    """Non-finite values appeared during an optimization."""


class CycleError(UpliftError, ValueError):
    """A graph that must be acyclic contains a directed cycle."""
