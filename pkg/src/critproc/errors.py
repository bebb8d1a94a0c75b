"""Exception types shared across the package.

Two branches matter to the CLI: ConfigError maps to exit code 2,
DataError to exit code 3. Everything else is a plain bug.
"""

from __future__ import annotations


class CritprocError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CritprocError):
    """A configuration value is missing, malformed or out of range."""


class DataError(CritprocError):
    """Input data violates a contract (shape, type, finiteness, ...)."""


# -- configuration ----------------------------------------------------------

class InvalidConfig(ConfigError):
    pass


class KOutOfRange(ConfigError):
    """Requested cluster count k outside 1..n_leaves."""


class TooManyFeatures(ConfigError):
    """Exact Shapley enumeration requested for more groups than the cap."""


# -- data -------------------------------------------------------------------

class MissingColumn(DataError):
    pass


class TypeMismatch(DataError):
    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r}")


class NonFiniteValue(DataError):
    def __init__(self, row: int, column: str):
        self.row = row
        self.column = column
        super().__init__(f"row {row}, column {column!r}: non-finite value")


class BadVectorLength(DataError):
    pass


class MissingRows(DataError):
    pass


class ClassTooSmall(DataError):
    """A stratum has too few members to place one row in each side."""


class EmptyDiskList(DataError):
    pass


class MissingSourceColumn(DataError):
    pass


class ColumnAlreadyPresent(DataError):
    pass


class NonFiniteInput(DataError):
    pass


class EmptyData(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class LabelOutOfRange(DataError):
    pass


class ZeroVarianceTarget(DataError):
    """R^2 is undefined when the target has zero variance."""


class ZeroTargetValue(DataError):
    """MAPE is undefined when a target value is exactly zero."""


class IoError(DataError):
    """A file could not be read or written."""
