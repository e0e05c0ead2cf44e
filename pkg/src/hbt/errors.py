"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: validation and usage problems
exit 2, I/O and runtime failures exit 1.
"""


class HbtError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(HbtError, ValueError):
    """Invalid argument, configuration, distribution, or file content request."""


class ShapeError(ValidationError):
    """Operands have incompatible or malformed shapes."""


class NumericError(HbtError, ArithmeticError):
    """Non-finite values appeared where finite ones are required."""


class DataIOError(HbtError):
    """Missing or malformed data on disk."""
