"""Shared exception types."""


class NumericalError(RuntimeError):
    """A numerical routine could not produce a trustworthy result."""


class InfeasibleBoxError(NumericalError):
    """A truncation box carries numerically no probability mass."""


class ConfigError(ValueError):
    """A run configuration is malformed or inconsistent."""
