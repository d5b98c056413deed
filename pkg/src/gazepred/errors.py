"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 1, data
problems exit 2, numerical failures exit 3.
"""


class GazePredError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GazePredError):
    """Invalid configuration: bad hyperparameter, unknown feature name,
    incompatible layer widths, and similar user-fixable mistakes."""


class SchemaError(GazePredError):
    """An input file is missing a required column."""


class ParseError(GazePredError):
    """A cell or line of an input file could not be parsed."""


class ValidationError(GazePredError):
    """Parsed data violates a documented invariant (range, duplicates,
    alignment, empty split, ...)."""


class NumericalError(GazePredError):
    """A non-finite value appeared where a finite one is required."""
