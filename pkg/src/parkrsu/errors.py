"""Shared exception types."""


class ConfigurationError(ValueError):
    """Invalid model or run configuration (message names the offending field)."""


class OutOfBoundsError(ValueError):
    """Position or cell outside the grid footprint."""


class MalformedLineError(ValueError):
    """Unparseable line in an external text input (message names the line)."""
