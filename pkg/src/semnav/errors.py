"""Exception hierarchy shared across the package."""


class SemnavError(Exception):
    """Base class for all package-specific errors."""


class DataError(SemnavError):
    """Malformed or inconsistent input data (files, streams, fixtures)."""


class ConfigError(DataError):
    """Invalid configuration value or unknown configuration key."""


class StreamFormatError(DataError):
    """Structurally broken observation-stream bytes (bad magic, truncation)."""


class MapFormatError(DataError):
    """Structurally broken serialized map bytes (bad magic, truncation)."""


class PlanningError(SemnavError):
    """Unrecoverable planner precondition failure (e.g. start inside an obstacle)."""
