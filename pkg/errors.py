"""
Exception hierarchy shared by the engines, the scenario builders and the CLI.
The CLI maps each family to a process exit code.
"""


class FirstPassageError(Exception):
    """Base class for all errors raised by this package."""
    exit_code = 1


class SpecError(FirstPassageError, ValueError):
    """An increment distribution violates its invariants (centering, mass, support)."""
    exit_code = 2


class ModelError(FirstPassageError, ValueError):
    """A row of the triangular array is not normalized or cannot survive."""
    exit_code = 2


class ConfigError(FirstPassageError, ValueError):
    """A scenario or run specification is malformed."""
    exit_code = 2


class EngineMismatchError(FirstPassageError):
    """The requested engine cannot handle the row (e.g. exact DP on continuous steps)."""
    exit_code = 3


class ResourceGuardError(FirstPassageError):
    """The exact engine would exceed its cell-update budget."""
    exit_code = 4


class UninformativeLimitError(FirstPassageError, ValueError):
    """The limit formula degenerates to zero and carries no information."""
    exit_code = 2
