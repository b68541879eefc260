"""Exception hierarchy shared by every pipeline stage.

Each category maps onto a CLI exit code (see :mod:`qtsim.cli`).
"""


class QtsimError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(QtsimError):
    """Invalid or unknown configuration key/value."""

    exit_code = 2


class SchemaError(QtsimError):
    """Column/feature layout does not match what a stage expects."""

    exit_code = 3


class DataError(QtsimError):
    """Input data is malformed or unusable."""

    exit_code = 4


class NumericError(QtsimError):
    """A numeric failure such as a NaN training loss."""

    exit_code = 5


class ShapeError(QtsimError, ValueError):
    """Tensor shapes are incompatible for an operation."""

    exit_code = 4


class UsageError(QtsimError):
    """An API was called in the wrong order (e.g. encode before fit)."""

    exit_code = 2
