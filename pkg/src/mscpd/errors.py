"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """A parameter lies outside the domain of the operation."""


class OutOfRangeError(InvalidInputError):
    """A grid point does not fit inside the series."""


class ConfigError(InvalidInputError):
    """Inconsistent or invalid run configuration."""


class DataError(ValueError):
    """Malformed input data (e.g. a ragged CSV file)."""
