"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError and UsageError exit 2,
everything else that escapes exits 1.
"""


class SocnavError(Exception):
    """Base class for package errors."""


class ConfigError(SocnavError):
    """Invalid scenario, parameter, or file configuration."""


class UsageError(SocnavError):
    """Command invoked in a way that cannot be satisfied."""


class SchemaError(SocnavError):
    """A serialized artifact does not match its declared schema."""


class UnsupportedAttributeError(ConfigError):
    """An attribute value the social model has no membership function for."""


class InsufficientDataError(SocnavError):
    """Not enough experiences to run the requested analysis."""
