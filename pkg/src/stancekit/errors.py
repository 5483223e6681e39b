"""Shared exception types."""


class ConfigError(ValueError):
    """Raised for invalid or inconsistent configuration values."""
