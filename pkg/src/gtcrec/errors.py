"""Exception types shared across the package."""


class GTCError(Exception):
    """Base class for all package errors."""


class DataError(GTCError):
    """Invalid or inconsistent input data."""


class ConfigError(GTCError):
    """Invalid configuration key, type, or constraint."""


class NumericalError(GTCError):
    """Non-finite values or numerical divergence during computation."""
