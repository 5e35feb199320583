"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class ConfigError(ValueError):
    """A configuration value is invalid.  ``key`` names the offending field."""

    def __init__(self, key, message):
        self.key = key
        self.detail = message
        super().__init__(f"{key}: {message}")


class UsageError(RuntimeError):
    pass


class FormatError(ValueError):
    """File contents are not in a supported format."""


class RateError(ValueError):
    """Audio sample rate differs from the expected rate."""
