"""Exception hierarchy shared by the core package, the service and the CLI.

Each class carries the process exit code the CLI uses for it, so the
mapping between failure class and exit status is defined exactly once.
"""


class RotechoError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(RotechoError, ValueError):
    """Invalid configuration or input data."""

    exit_code = 2


class DomainError(RotechoError, ValueError):
    """Mathematically ill-defined input (zero-length vector, t0 <= 0, ...)."""

    exit_code = 2


class ResourceLimitError(RotechoError, RuntimeError):
    """A configured size or cluster budget would be exceeded."""

    exit_code = 3


class FitError(RotechoError, RuntimeError):
    """A fit could not produce a usable result."""

    exit_code = 4


class NoRevivalError(FitError):
    """No resolvable revival peak in the requested window."""


# Wire format for transporting errors over the HTTP service.
_BY_NAME = {
    cls.__name__: cls
    for cls in (RotechoError, ValidationError, DomainError,
                ResourceLimitError, FitError, NoRevivalError)
}


def error_from_name(name: str, message: str) -> RotechoError:
    """Rebuild a package exception from its serialized class name."""
    return _BY_NAME.get(name, RotechoError)(message)
