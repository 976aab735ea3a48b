"""Exception types shared across the package.

The CLI maps these onto its exit codes: parse/dimension problems are
input errors (exit 3), numeric and empty-data failures exit 4.
"""


class OccError(Exception):
    """Base class for all occkit errors."""


class DimensionError(OccError, ValueError):
    """Array shapes are inconsistent; the message names both shapes."""


class ParseError(OccError, ValueError):
    """A file or a CLI value could not be parsed."""


class NumericError(OccError, ValueError):
    """Non-finite values or a failed numeric check."""


class EmptyDataError(OccError, ValueError):
    """An operation that needs at least one datum received none."""
