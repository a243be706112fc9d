"""Exception types shared across the package."""


class ConfBanditError(Exception):
    """Base class for all package errors."""


class ValidationError(ConfBanditError, ValueError):
    """Bad argument or input value (empty text, non-finite vector, ...)."""


class BoundsError(ValidationError):
    """An action index is outside its axis; the message names the axis."""


class FormatError(ConfBanditError, ValueError):
    """A file or wire payload does not match its documented schema."""


class CheckpointError(FormatError):
    """A checkpoint document failed validation on load."""


class EnvironmentCallError(ConfBanditError, RuntimeError):
    """A remote endpoint failed after retries or returned garbage."""


class TrainingError(ConfBanditError, RuntimeError):
    """Training aborted; ``report`` carries the partial run so far."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
