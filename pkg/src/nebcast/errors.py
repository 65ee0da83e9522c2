"""Shared exception types."""


class ConfigurationError(ValueError):
    """A configuration value or id-space constraint was violated."""
