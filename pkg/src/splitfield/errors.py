"""Exception types shared across the package."""


class SplitFieldError(Exception):
    """Base class for package errors."""


class ArgumentError(SplitFieldError, ValueError):
    """An argument violates a documented precondition."""


class SupportError(ArgumentError):
    """A scaled test function reaches outside the measure's window."""


class ScheduleError(ArgumentError):
    """A scan schedule does not shrink lambda * log^d r strictly."""


class UnsupportedError(SplitFieldError, NotImplementedError):
    """The requested operation has no certified implementation for this input."""


class PremiseError(SplitFieldError):
    """The premise of an inequality check is not certified, so the check is refused."""
