"""Exception types shared across the package.

Shape and argument problems raise plain ``ValueError``.
"""


class CITLError(Exception):
    """Base class for package errors."""


class IngestionError(CITLError):
    """A cohort manifest or series file could not be read."""


class NumericError(CITLError, ArithmeticError):
    """A non-finite value appeared in a loss or gradient."""


class CheckpointError(CITLError):
    """A checkpoint or report file is corrupted or has the wrong schema."""
