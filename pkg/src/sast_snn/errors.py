"""Exception types raised across the package."""


class SastError(Exception):
    """Base class for package errors."""


class MalformedFileError(SastError, ValueError):
    pass


class OutOfRangeError(SastError, ValueError):
    pass


class ShapeError(SastError, ValueError):
    pass


class InvalidModeError(SastError, ValueError):
    pass


class ConfigError(SastError, ValueError):
    """Invalid run configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
