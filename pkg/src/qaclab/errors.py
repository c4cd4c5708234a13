"""Error taxonomy shared across the package.

Subclassing ValueError / RuntimeError keeps plain ``except ValueError``
callers working while letting the CLI map failures to exit codes.
"""


class InputError(ValueError):
    """Bad argument or malformed input data (CLI exit code 2)."""


class ParseError(InputError):
    """A data file does not conform to its documented format."""


class RangeError(InputError):
    """A numeric value falls outside its allowed range."""


class UnsupportedCodeError(InputError):
    """Encoding requested on a graph shape the code does not support."""


class DependencyError(RuntimeError):
    """A required artifact (certificate, archive, ...) is missing (exit 3)."""


class ResourceError(RuntimeError):
    """Projected memory or time exceeds the configured cap (exit 4)."""


class FitFailureError(RuntimeError):
    """Optimizer failed to produce an acceptable fit."""


class UndefinedStatisticError(ValueError):
    """A statistic is undefined for the given data (e.g. zero variance)."""
