"""Exception hierarchy for the ingest adapter."""

from __future__ import annotations


class IngestError(Exception):
    """Base class for every error this package raises on purpose."""


class DatasetError(IngestError):
    """Input data violates the documented dataset layout or an invariant."""


class ConfigError(IngestError):
    """Export configuration is malformed or out of range."""
