"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration and data problems
(ConfigError, ParseError, GenerationError, DimensionError, MetricError)
exit with 2, numeric failures during training (NumericError) with 3.
"""


class OpenSetSSLError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(OpenSetSSLError):
    """Operand or input shapes are incompatible."""


class ConfigError(OpenSetSSLError):
    """A configuration value or validated input is out of contract."""


class ParseError(ConfigError):
    """A config or data file could not be parsed."""


class GenerationError(OpenSetSSLError):
    """Synthetic data generation could not satisfy its constraints."""


class NumericError(OpenSetSSLError):
    """A non-finite value appeared where a finite one is required."""


class MetricError(OpenSetSSLError):
    """A requested metric is undefined for the given inputs."""
