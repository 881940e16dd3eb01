"""Exception hierarchy shared across the package.

The CLI maps these onto its exit-code contract: any :class:`InputError`
(including subclasses) exits 2, :class:`NumericError` exits 3.
"""


class VagnetError(Exception):
    """Base class for all package errors."""


class InputError(VagnetError):
    """An argument, file, or precondition supplied by the caller is invalid."""


class DimensionError(InputError):
    """Operand shapes are incompatible."""


class ConfigError(InputError):
    """A model or training configuration is internally inconsistent."""


class FormatError(InputError):
    """A file does not conform to its binary or text format."""


class MetricUndefinedError(InputError):
    """A metric has no defined value for the given inputs."""


class NumericError(VagnetError):
    """A non-finite value (NaN/Inf) surfaced where finite math is required."""
