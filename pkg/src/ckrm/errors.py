"""Exception types shared across the package.

The CLI maps these onto exit codes: :class:`InputError` -> 1,
:class:`ConstraintViolation` -> 2, anything else -> 3.
"""


class InputError(Exception):
    """Unreadable or malformed input: files, flags, or parameter values."""


class ArchiveError(InputError):
    """A tensor archive violates the on-disk format contract."""


class ReportError(InputError):
    """A report or plan file does not match the expected schema."""


class ConstraintViolation(Exception):
    """A network structure violates its declared width constraints."""
