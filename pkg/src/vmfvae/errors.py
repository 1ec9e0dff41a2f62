"""Exception types shared across the package.

The CLI maps these onto exit codes, so raise the most specific one.
"""


class VmfVaeError(Exception):
    """Base class for package errors."""


class DomainError(VmfVaeError, ValueError):
    """Argument outside the mathematical domain of a function."""


class ShapeError(VmfVaeError, ValueError):
    """Tensor shapes are incompatible for an operation."""


class NumericalError(VmfVaeError, FloatingPointError):
    """A non-finite value appeared where a finite one is required."""


class SamplerError(NumericalError):
    """Rejection sampler exhausted its proposal budget."""


class ConfigError(VmfVaeError, ValueError):
    """Invalid run configuration."""


class CorpusError(VmfVaeError, ValueError):
    """Malformed corpus input or an unusable document."""
